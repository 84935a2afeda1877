use mlprop_core::antiderivative::{
    antiderivative_general, apply_i_to_test_function, cumulative_antiderivative, dc_slice_check, dual_pairing,
    odd_symmetrize, shear_pullback, shear_pushforward, spectral_antiderivative, spectral_derivative,
    symmetrized_antiderivative, tmin, xray_transform, LowerBound, Psi0, SupportBound, TestFunction,
    TestFunctionSpec, TminFn,
};
use mlprop_core::fft::Planner;
use mlprop_core::grid::{make_grid, Direction, GridSpec, SampledField};
use mlprop_core::phantoms::{bump_profile, rasterize, PhantomSpec};
use mlprop_core::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> GridSpec {
    make_grid(&[(-2.0, 2.0), (-2.0, 2.0)], &[n, n]).unwrap()
}

fn dir(x: f64, y: f64) -> Direction {
    Direction::normalized(&[x, y]).unwrap()
}

fn bump(g: &GridSpec, c: [f64; 2], r: f64) -> SampledField {
    rasterize(&PhantomSpec::bump(c.to_vec(), r, 1.0), g).unwrap()
}

fn random_bump(g: &GridSpec, rng: &mut ChaCha8Rng) -> SampledField {
    random_bump_sized(g, rng, 0.35, 0.7)
}

fn random_bump_sized(g: &GridSpec, rng: &mut ChaCha8Rng, r_lo: f64, r_hi: f64) -> SampledField {
    let c = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
    bump(g, c, rng.gen_range(r_lo..r_hi))
}

/// Indicator of the unit square on `[-1, 3]^2`.
fn unit_square() -> SampledField {
    let g = make_grid(&[(-1.0, 3.0), (-1.0, 3.0)], &[128, 128]).unwrap();
    SampledField::from_fn(g, 1, |x| if (0.0..=1.0).contains(&x[0]) && (0.0..=1.0).contains(&x[1]) { 1.0 } else { 0.0 })
        .unwrap()
}

/// Relative L2 difference over the cells accepted by `keep`.
fn rel_l2(a: &SampledField, b: &SampledField, keep: impl Fn(&[f64]) -> bool) -> f64 {
    let g = a.grid();
    let (mut num, mut den) = (0.0, 0.0);
    for (flat, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        if keep(&g.coordinate_of_flat(flat)) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

/// Plain bilinear interpolation, zero outside the grid.
fn bilinear(f: &SampledField, x: f64, y: f64) -> f64 {
    let g = f.grid();
    let (n0, n1) = (g.shape()[0], g.shape()[1]);
    let qx = (x - g.origin()[0]) / g.spacing()[0];
    let qy = (y - g.origin()[1]) / g.spacing()[1];
    if qx < 0.0 || qy < 0.0 || qx > (n0 - 1) as f64 || qy > (n1 - 1) as f64 {
        return 0.0;
    }
    let (i, j) = ((qx.floor() as usize).min(n0 - 2), (qy.floor() as usize).min(n1 - 2));
    let (a, b) = (qx - i as f64, qy - j as f64);
    let v = f.values();
    (1.0 - a) * (1.0 - b) * v[i * n1 + j]
        + a * (1.0 - b) * v[(i + 1) * n1 + j]
        + (1.0 - a) * b * v[i * n1 + j + 1]
        + a * b * v[(i + 1) * n1 + j + 1]
}

#[test]
fn tmin_of_the_unit_square() {
    let f = unit_square();
    let h = f.grid().spacing()[0];
    assert!(tmin(&f, &dir(1.0, 0.0)).unwrap().abs() <= h);
    assert!(tmin(&f, &dir(0.0, 1.0)).unwrap().abs() <= h);
}

#[test]
fn tmin_matches_exhaustive_scan() {
    let g = square(128);
    let f = random_bump(&g, &mut ChaCha8Rng::seed_from_u64(3));
    let v = dir(1.0, 1.0);
    let mut lo = f64::INFINITY;
    for i in 0..128 {
        for j in 0..128 {
            if f.get(&[i, j]) != 0.0 {
                let x = g.coordinate(&[i, j]);
                lo = lo.min((x[0] + x[1]) / 2f64.sqrt());
            }
        }
    }
    let expected = lo - 0.5 * g.spacing()[0] * 2f64.sqrt();
    assert!((tmin(&f, &v).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn tmin_of_zero_field_is_an_error() {
    let f = SampledField::zeros(square(32), 1);
    assert!(matches!(tmin(&f, &dir(1.0, 0.0)), Err(Error::EmptySupport)));
}

#[test]
fn cumulative_of_zero_is_zero() {
    let f = SampledField::zeros(square(64), 1);
    let out = cumulative_antiderivative(&f, &dir(0.3, 1.0), f.grid()).unwrap();
    assert!(out.values().iter().all(|&v| v == 0.0));
}

#[test]
fn cumulative_of_the_unit_square() {
    let f = unit_square();
    let g = f.grid().clone();
    let h = g.spacing()[0];
    let out = cumulative_antiderivative(&f, &dir(1.0, 0.0), &g).unwrap();
    assert!((out.interpolate(&[2.0, 0.5]) - 1.0).abs() <= 2.0 * h);
    assert!((out.interpolate(&[0.5, 0.5]) - 0.5).abs() <= 2.0 * h);
}

#[test]
fn cumulative_matches_oversampled_riemann_sum() {
    // trapezoid steps on a bilinear interpolant are second order off the axes,
    // so the bump is kept at 40 or more cells per radius
    let g = square(256);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in [dir(1.0, 0.0), Direction::from_angle(0.3), Direction::from_angle(2.0)] {
        let f = random_bump_sized(&g, &mut rng, 0.6, 0.8);
        let out = cumulative_antiderivative(&f, &v, &g).unwrap();
        let step = g.spacing()[0] / 10.0;
        let t_end = 4.0 * 2f64.sqrt();
        let (mut num, mut den) = (0.0, 0.0);
        for i in (0..256).step_by(5) {
            for j in (0..256).step_by(5) {
                let x = g.coordinate(&[i, j]);
                let mut acc = 0.0;
                let mut t = 0.5 * step;
                while t < t_end {
                    acc += bilinear(&f, x[0] - t * v.as_slice()[0], x[1] - t * v.as_slice()[1]);
                    t += step;
                }
                let exact = acc * step;
                num += (out.get(&[i, j]) - exact).powi(2);
                den += exact * exact;
            }
        }
        assert!((num / den).sqrt() <= 1e-4, "rel {}", (num / den).sqrt());
    }
}

#[test]
fn odd_reflection_of_a_single_cell() {
    let g = square(64);
    let mut vals = vec![0.0; g.len()];
    vals[g.flat_index(&[20, 30])] = 0.75;
    let f = SampledField::new(g.clone(), vals, 1).unwrap();
    let v = dir(1.0, 0.0);
    let bound = SupportBound::for_field(&f, &v).unwrap();
    let w = odd_symmetrize(&f, &v, &bound).unwrap();
    let a = g.coordinate(&[20, 30])[0];
    let nonzero: Vec<(Vec<f64>, f64)> = w
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(k, &x)| (w.grid().coordinate_of_flat(k), x))
        .collect();
    assert_eq!(nonzero.len(), 2);
    assert_eq!(nonzero[0].1, 0.75);
    assert!((nonzero[0].0[0] - a).abs() < 1e-12);
    assert_eq!(nonzero[1].1, -0.75);
    assert!((nonzero[1].0[0] - (2.0 * bound.t0 - a)).abs() < 1e-12);
    assert_eq!(nonzero[1].0[1], nonzero[0].0[1]);
}

#[test]
fn reflection_rejects_a_low_centre() {
    let f = bump(&square(64), [0.0, 0.0], 0.5);
    let v = dir(1.0, 0.0);
    let mut bound = SupportBound::for_field(&f, &v).unwrap();
    bound.t0 = bound.t_max - 0.25;
    assert!(odd_symmetrize(&f, &v, &bound).is_err());
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn reflection_annihilates_even_test_functions() {
    let g = square(128);
    let f = random_bump(&g, &mut ChaCha8Rng::seed_from_u64(5));
    for v in [dir(1.0, 0.0), dir(0.0, 1.0)] {
        let axis = if v.as_slice()[0] != 0.0 { 0 } else { 1 };
        let bound = SupportBound::for_field(&f, &v).unwrap();
        let w = odd_symmetrize(&f, &v, &bound).unwrap();
        let eg = w.grid();
        let phi: Vec<f64> = (0..eg.len())
            .map(|k| {
                let x = eg.coordinate_of_flat(k);
                let s = x[axis] - bound.t0;
                let u = x[1 - axis];
                (-s * s / 0.8).exp() * (1.0 + (s * 3.0).cos()) * (-(u - 0.2) * (u - 0.2)).exp()
            })
            .collect();
        let pairing: f64 = w.values().iter().zip(&phi).map(|(a, b)| a * b).sum();
        assert!(pairing.abs() <= 1e-10 * norm2(w.values()) * norm2(&phi), "pairing {pairing}");
    }
}

#[test]
fn reflection_spectrum_vanishes_at_zero_frequency() {
    let g = square(128);
    let f = random_bump(&g, &mut ChaCha8Rng::seed_from_u64(6));
    let v = dir(1.0, 0.0);
    let bound = SupportBound::for_field(&f, &v).unwrap();
    let w = odd_symmetrize(&f, &v, &bound).unwrap();
    let shape = w.grid().shape().to_vec();
    let mut data: Vec<Complex64> = w.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Planner::default().transform(&mut data, &shape, false);
    let top = data.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let slice = (0..shape[1]).map(|k| data[k].norm()).fold(0.0, f64::max);
    assert!(slice <= 1e-10 * top, "slice {slice} top {top}");
}

#[test]
fn reflected_antiderivative_is_even_across_the_centre() {
    let g = square(128);
    let f = random_bump(&g, &mut ChaCha8Rng::seed_from_u64(8));
    let v = dir(1.0, 0.0);
    let bound = SupportBound::for_field(&f, &v).unwrap();
    let a = symmetrized_antiderivative(&f, &v, &bound).unwrap();
    let eg = a.grid();
    let (m, n) = (eg.shape()[0], eg.shape()[1]);
    let c = ((bound.t0 - eg.origin()[0]) / eg.spacing()[0]).round() as i64;
    let top = a.max_abs();
    let mut worst: f64 = 0.0;
    for j in 0..m as i64 {
        let k = (2 * c - j).rem_euclid(m as i64);
        for i in 0..n {
            let d = a.values()[j as usize * n + i] - a.values()[k as usize * n + i];
            worst = worst.max(d.abs());
        }
    }
    assert!(worst <= 1e-10 * top, "asymmetry {worst} of {top}");
}

#[test]
fn dc_slice_matches_the_centred_difference() {
    let g = square(128);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in [dir(1.0, 0.0), dir(0.0, 1.0)] {
        let f = random_bump(&g, &mut rng);
        let bound = SupportBound::for_field(&f, &v).unwrap();
        let r = dc_slice_check(&f, &v, &bound, 4).unwrap();
        assert!(r.max_rel_error <= 1e-2, "dc error {}", r.max_rel_error);
    }
}

#[test]
fn spectral_of_zero_is_zero() {
    let g = square(64);
    let f = SampledField::zeros(g, 1);
    let bound = SupportBound { lower: LowerBound::Constant(-0.5), t_max: 0.5, t0: 1.0 };
    let out = spectral_antiderivative(&f, &dir(1.0, 0.0), &bound).unwrap();
    assert!(out.values().iter().all(|&v| v == 0.0));
}

/// Drops roundoff so a spectrally computed field has compact support again.
fn clean(f: &SampledField, rel: f64) -> SampledField {
    let cut = rel * f.max_abs();
    f.map(|x| if x.abs() < cut { 0.0 } else { x }).unwrap()
}

#[test]
fn spectral_antiderivative_inverts_the_derivative() {
    let g = square(256);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for v in [dir(1.0, 0.0), dir(0.0, 1.0), dir(-1.0, 0.0)] {
        let f = random_bump_sized(&g, &mut rng, 0.7, 0.9);
        let a = spectral_antiderivative(&f, &v, &SupportBound::for_field(&f, &v).unwrap()).unwrap();
        let back = spectral_derivative(&a, &v).unwrap();
        let e = rel_l2(&back, &f, |_| true);
        assert!(e <= 1e-6, "D I: {e}");

        let d = clean(&spectral_derivative(&f, &v).unwrap(), 1e-13);
        let g2 = spectral_antiderivative(&d, &v, &SupportBound::for_field(&d, &v).unwrap()).unwrap();
        let e = rel_l2(&g2, &f, |_| true);
        assert!(e <= 1e-6, "I D: {e}");
    }
}

fn spectral_vs_cumulative(n: usize, seed: u64, v: &Direction) -> f64 {
    let g = square(n);
    let f = random_bump(&g, &mut ChaCha8Rng::seed_from_u64(seed));
    let bound = SupportBound::for_field(&f, v).unwrap();
    let s = spectral_antiderivative(&f, v, &bound).unwrap();
    let c = cumulative_antiderivative(&f, v, &g).unwrap();
    rel_l2(&s, &c, |x| v.dot(x) < bound.t0)
}

#[test]
fn spectral_agrees_with_cumulative_and_converges() {
    for seed in 0..3 {
        for v in [dir(1.0, 0.0), dir(0.0, 1.0)] {
            let coarse = spectral_vs_cumulative(128, seed, &v);
            let fine = spectral_vs_cumulative(256, seed, &v);
            assert!(fine <= 1e-3, "seed {seed}: {fine}");
            assert!(coarse / fine >= 3.0, "seed {seed}: ratio {}", coarse / fine);
        }
    }
}

#[test]
fn spectral_handles_oblique_directions() {
    let g = square(128);
    let f = bump(&g, [0.1, -0.2], 0.6);
    let v = dir(1.0, 2.0);
    let bound = SupportBound::for_field(&f, &v).unwrap();
    let s = spectral_antiderivative(&f, &v, &bound).unwrap();
    let c = cumulative_antiderivative(&f, &v, &g).unwrap();
    let e = rel_l2(&s, &c, |x| v.dot(x) < bound.t0);
    assert!(e <= 1e-2, "oblique {e}");
}

#[test]
fn xray_of_the_unit_square() {
    let f = unit_square();
    let h = f.grid().spacing()[0];
    let x = xray_transform(&f, &dir(1.0, 0.0)).unwrap();
    let lg = x.grid();
    assert_eq!(lg.dim(), 1);
    for k in 0..lg.len() {
        let u = lg.coordinate_of_flat(k)[0];
        let val = x.values()[k];
        if u > h && u < 1.0 - h {
            assert!((val - 1.0).abs() <= 2.0 * h, "u {u}: {val}");
        } else if u < -h || u > 1.0 + h {
            assert!(val.abs() <= 2.0 * h, "u {u}: {val}");
        }
    }
}

#[test]
fn xray_is_linear() {
    let g = square(96);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let f = random_bump(&g, &mut rng);
    let k = random_bump(&g, &mut rng);
    let sum = f.axpy(1.0, &k).unwrap();
    for v in [dir(1.0, 0.0), dir(0.6, 0.8)] {
        let a = xray_transform(&sum, &v).unwrap();
        let b = xray_transform(&f, &v).unwrap();
        let c = xray_transform(&k, &v).unwrap();
        let scale = a.max_abs();
        for i in 0..a.values().len() {
            assert!((a.values()[i] - b.values()[i] - c.values()[i]).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn xray_kills_derivatives() {
    let g = square(512);
    let (c, r) = ([0.1, -0.2], 0.6);
    let d = SampledField::from_fn(g, 1, |x| {
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        let s2 = (dx * dx + dy * dy) / (r * r);
        if s2 >= 1.0 {
            0.0
        } else {
            bump_profile(s2.sqrt()) * (-2.0 * dx / (r * r)) / ((1.0 - s2) * (1.0 - s2))
        }
    })
    .unwrap();
    let x = xray_transform(&d, &dir(1.0, 0.0)).unwrap();
    assert!(x.max_abs() <= 1e-6, "max {}", x.max_abs());
}

#[test]
fn test_function_with_zero_xray() {
    let v = dir(0.6, 0.8);
    let c = vec![0.3, -0.1];
    let phi = TestFunction::gaussian_derivative(c.clone(), 0.2, 1.0, &v);
    let g = TestFunction::gaussian(c, 0.2, 1.0);
    let spec = TestFunctionSpec::new(phi, Psi0::new(-3.0, 0.5).unwrap());
    let pts: Vec<Vec<f64>> = (0..25).map(|k| vec![-0.5 + 0.05 * k as f64, 0.4 - 0.03 * k as f64]).collect();
    let vals = apply_i_to_test_function(&spec, &v, &pts).unwrap();
    for (p, val) in pts.iter().zip(vals) {
        assert!((val - g.eval(p)).abs() <= 1e-8, "{p:?}: {val} vs {}", g.eval(p));
    }
}

#[test]
fn test_function_tails() {
    let v = dir(1.0, 0.0);
    let phi = TestFunction::gaussian(vec![0.0, 0.2], 0.3, 1.0);
    let spec = TestFunctionSpec::new(phi, Psi0::new(-1.0, 0.25).unwrap());
    let vals = apply_i_to_test_function(&spec, &v, &[vec![-20.0, 0.1], vec![40.0, 0.1], vec![3.0, 0.25]]).unwrap();
    assert_eq!(vals[0], 0.0);
    assert!(vals[1].abs() <= 1e-9);
    assert!(vals[2].abs() <= 1e-9);
}

#[test]
fn pairing_examples() {
    let g = square(256);
    let h = g.spacing()[0];
    let phi = TestFunction::gaussian(vec![0.2, 0.1], 0.4, 1.0);
    assert_eq!(dual_pairing(&SampledField::zeros(g.clone(), 1), &phi), 0.0);

    let sigma = 2.0 * h;
    let x0 = [0.5, -0.3];
    let delta = rasterize(&PhantomSpec::point_delta(x0.to_vec(), 1.0, sigma), &g).unwrap();
    let p = dual_pairing(&delta, &phi);
    assert!((p - phi.eval(&x0)).abs() <= (sigma / 0.4).powi(2), "{p} vs {}", phi.eval(&x0));
}

#[test]
fn pairing_matches_supersampling() {
    let g = square(128);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..3 {
        let f = random_bump(&g, &mut rng);
        let phi = TestFunction::gaussian(vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)], 0.5, 1.0);
        let fine = g.spacing()[0] / 4.0;
        let mut acc = 0.0;
        for i in 0..(127 * 4 + 1) {
            for j in 0..(127 * 4 + 1) {
                let (x, y) = (-2.0 + i as f64 * fine, -2.0 + j as f64 * fine);
                acc += bilinear(&f, x, y) * phi.eval(&[x, y]);
            }
        }
        let oracle = acc * fine * fine;
        let p = dual_pairing(&f, &phi);
        assert!(((p - oracle) / oracle).abs() <= 1e-3, "{p} vs {oracle}");
    }
}

/// `-<w, I_v phi>` with the given `psi0`.
fn adjoint_side(w: &SampledField, phi: &TestFunction, psi0: Psi0, v: &Direction) -> f64 {
    let g = w.grid();
    let cells: Vec<usize> = (0..g.len()).filter(|&k| w.values()[k] != 0.0).collect();
    let pts: Vec<Vec<f64>> = cells.iter().map(|&k| g.coordinate_of_flat(k)).collect();
    let spec = TestFunctionSpec::new(phi.clone(), psi0);
    let vals = apply_i_to_test_function(&spec, v, &pts).unwrap();
    -cells.iter().zip(vals).map(|(&k, iv)| w.values()[k] * iv).sum::<f64>() * g.cell_volume()
}

#[test]
fn duality_and_psi0_independence() {
    let g = square(256);
    let h = g.spacing()[0];
    let pairs = [
        ([0.0, 0.1], 0.5, dir(1.0, 0.0), [0.4, 0.0], 0.35),
        ([-0.3, 0.2], 0.4, dir(0.0, 1.0), [0.0, 0.5], 0.3),
        ([0.2, -0.2], 0.6, dir(-1.0, 0.0), [-0.5, -0.1], 0.4),
    ];
    for (c, r, v, pc, width) in pairs {
        let w = bump(&g, c, r);
        let phi = TestFunction::gaussian(pc.to_vec(), width, 1.0);
        let a = spectral_antiderivative(&w, &v, &SupportBound::for_field(&w, &v).unwrap()).unwrap();
        let lhs = dual_pairing(&a, &phi);
        let t = tmin(&w, &v).unwrap();
        let rhs = adjoint_side(&w, &phi, Psi0::below(t, 4.0 * h, 0.25).unwrap(), &v);
        assert!(((lhs - rhs) / lhs).abs() <= 1e-3, "{lhs} vs {rhs}");
        let other = adjoint_side(&w, &phi, Psi0::below(t, 20.0 * h, 0.1).unwrap(), &v);
        assert!(((other - rhs) / rhs).abs() <= 1e-6, "{other} vs {rhs}");
    }
}

#[test]
fn shear_examples() {
    let g = square(128);
    let h = g.spacing()[0];
    let f = bump(&g, [0.1, 0.0], 0.6);
    let v = dir(1.0, 0.0);
    let same = shear_pullback(&f, &v, &TminFn::Zero).unwrap();
    assert!(f.values().iter().zip(same.values()).all(|(a, b)| (a - b).abs() <= 1e-12));

    let moved = shear_pullback(&f, &v, &TminFn::Constant(8.0 * h)).unwrap();
    for i in 0..120 {
        for j in 0..128 {
            assert!((moved.get(&[i, j]) - f.get(&[i + 8, j])).abs() <= 1e-12);
        }
    }
}

fn shear_round_trip_error(n: usize, v: &Direction) -> f64 {
    let f = bump(&square(n), [0.0, 0.1], 0.6);
    let t = TminFn::Sine { amplitude: 0.2, wavenumber: 1.0 };
    let back = shear_pushforward(&shear_pullback(&f, v, &t).unwrap(), v, &t).unwrap();
    rel_l2(&back, &f, |_| true)
}

#[test]
fn shear_round_trip() {
    for v in [dir(1.0, 0.0), dir(0.6, 0.8)] {
        let coarse = shear_round_trip_error(256, &v);
        let fine = shear_round_trip_error(512, &v);
        assert!(fine <= 1e-3, "round trip {fine}");
        assert!(coarse / fine >= 3.0, "ratio {}", coarse / fine);
    }
}

#[test]
fn shear_overflow_is_rejected() {
    let g = square(64);
    let f = bump(&g, [1.0, 0.0], 0.6);
    let r = shear_pullback(&f, &dir(1.0, 0.0), &TminFn::Constant(-1.0));
    assert!(matches!(r, Err(Error::ShearOverflow(_))));
}

#[test]
fn general_antiderivative_with_constant_bound() {
    let g = square(128);
    let h = g.spacing()[0];
    let f = bump(&g, [0.2, 0.1], 0.5);
    let v = dir(1.0, 0.0);
    let direct = spectral_antiderivative(&f, &v, &SupportBound::for_field(&f, &v).unwrap()).unwrap();
    let general = antiderivative_general(&f, &v, &TminFn::Constant(16.0 * h)).unwrap();
    let e = rel_l2(&general, &direct, |_| true);
    assert!(e <= 1e-6, "constant shear {e}");

    let zero = antiderivative_general(&SampledField::zeros(g, 1), &v, &TminFn::Zero);
    assert!(matches!(zero, Err(Error::EmptySupport)) || zero.unwrap().max_abs() == 0.0);
}

#[test]
fn general_antiderivative_with_sine_bound() {
    let g = square(256);
    let f = bump(&g, [-0.2, 0.0], 0.6);
    let v = dir(1.0, 0.0);
    let t = TminFn::Sine { amplitude: 0.2, wavenumber: 1.0 };
    let general = antiderivative_general(&f, &v, &t).unwrap();
    let oracle = cumulative_antiderivative(&f, &v, &g).unwrap();
    let e = rel_l2(&general, &oracle, |_| true);
    assert!(e <= 1e-3, "sine shear {e}");
}

#[test]
fn cumulative_is_local_upstream() {
    let g = square(128);
    let v = dir(1.0, 0.0);
    let near = bump(&g, [-0.8, 0.0], 0.4);
    let far = bump(&g, [0.9, 0.3], 0.4);
    let both = near.axpy(1.0, &far).unwrap();
    let a = cumulative_antiderivative(&near, &v, &g).unwrap();
    let b = cumulative_antiderivative(&both, &v, &g).unwrap();
    for k in 0..g.len() {
        if g.coordinate_of_flat(k)[0] < 0.3 {
            assert!((a.values()[k] - b.values()[k]).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cumulative_is_linear(seed in any::<u64>(), s in -3.0f64..3.0, angle in 0.0f64..std::f64::consts::TAU) {
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[24, 24]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise = || {
            let vals: Vec<f64> = (0..g.len()).map(|k| {
                let x = g.coordinate_of_flat(k);
                if x[0].abs() < 0.8 && x[1].abs() < 0.8 { rng.gen_range(-1.0..1.0) } else { 0.0 }
            }).collect();
            SampledField::new(g.clone(), vals, 1).unwrap()
        };
        let (f, k) = (noise(), noise());
        let v = Direction::from_angle(angle);
        let combo = cumulative_antiderivative(&k.axpy(s, &f).unwrap(), &v, &g).unwrap();
        let sep = cumulative_antiderivative(&k, &v, &g).unwrap()
            .axpy(s, &cumulative_antiderivative(&f, &v, &g).unwrap()).unwrap();
        let scale = 1.0 + combo.max_abs();
        prop_assert!(combo.values().iter().zip(sep.values()).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    }
}
