use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use mlprop_core::grid::{make_grid, GridSpec, WavefrontSet};
use mlprop_core::phantoms::{exact_wavefront, rasterize, PhantomKind, PhantomSpec};
use mlprop_core::wavefront::{estimate_wavefront, EstimatorParams};
use mlprop_core::Error;
use proptest::prelude::*;

/// The estimator's default position lattice on the 256-cell grid.
fn lattice() -> GridSpec {
    GridSpec::new(vec![25, 25], vec![0.125, 0.125], vec![-1.5, -1.5]).unwrap()
}

fn grid256() -> GridSpec {
    make_grid(&[(-2.0, 2.0), (-2.0, 2.0)], &[256, 256]).unwrap()
}

/// `(x, y, direction index)` keys with coordinates rounded to 1e-9.
fn keys(wf: &WavefrontSet) -> BTreeSet<(i64, i64, usize)> {
    let step = TAU / wf.direction_count() as f64;
    wf.singular()
        .map(|s| {
            let k = (s.theta.angle() / step).round() as usize % wf.direction_count();
            ((s.x[0] * 1e9).round() as i64, (s.x[1] * 1e9).round() as i64, k)
        })
        .collect()
}

#[test]
fn zero_amplitude_gives_zero_field() {
    let f = rasterize(&PhantomSpec::disk(vec![0.0, 0.0], 0.5, 0.0, 0.03), &grid256()).unwrap();
    assert!(f.values().iter().all(|&v| v == 0.0));
}

#[test]
fn point_delta_has_unit_mass() {
    let g = grid256();
    let h = g.spacing()[0];
    for loc in [[0.0, 0.0], [0.3, -0.71], [1.001, 0.5]] {
        let f = rasterize(&PhantomSpec::point_delta(loc.to_vec(), 1.0, 2.0 * h), &g).unwrap();
        assert!((f.integral() - 1.0).abs() <= 1e-6, "mass {}", f.integral());
    }
}

#[test]
fn disk_area_within_two_cells() {
    for n in [128, 256] {
        let g = make_grid(&[(-2.0, 2.0), (-2.0, 2.0)], &[n, n]).unwrap();
        let h = g.spacing()[0];
        let f = rasterize(&PhantomSpec::disk(vec![0.0, 0.0], 0.5, 1.0, 0.0), &g).unwrap();
        let area = PI * 0.25;
        assert!((f.integral() - area).abs() / area <= 2.0 * h / 0.5);
        assert!(f.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn geometry_must_clear_the_margin() {
    let g = grid256();
    let r = rasterize(&PhantomSpec::disk(vec![1.9, 0.0], 0.5, 1.0, 0.0), &g);
    assert!(matches!(r, Err(Error::GeometryOverflow(_))));
}

#[test]
fn json_parses_all_kinds() {
    let specs = [
        r#"{"kind":"disk_indicator","center":[0,0],"radius":1.0,"amplitude":1.0,"sigma":0.0}"#,
        r#"{"kind":"bump","center":[0,0],"radius":1.0,"amplitude":2.0}"#,
        r#"{"kind":"point_delta","location":[0,0],"amplitude":1.0,"sigma":0.03}"#,
        r#"{"kind":"segment_delta","start":[0,0],"end":[1,0],"amplitude":1.0,"sigma":0.03}"#,
        r#"{"kind":"half_plane_indicator","normal":[1,0],"offset":0.0,"center":[0,0],"radius":1.0,"amplitude":1.0}"#,
    ];
    for s in specs {
        let p: PhantomSpec = serde_json::from_str(s).unwrap();
        let back: PhantomSpec = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }
}

#[test]
fn exact_sets_of_simple_phantoms() {
    let g = grid256();
    let pos = lattice();
    assert_eq!(exact_wavefront(&PhantomSpec::bump(vec![0.0, 0.0], 1.0, 1.0), 72, &pos).unwrap().singular_count(), 0);

    let delta = PhantomSpec::point_delta(vec![0.0, 0.0], 1.0, g.spacing()[0]);
    let wf = exact_wavefront(&delta, 72, &pos).unwrap();
    assert_eq!(wf.singular_count(), 72);
    assert!(wf.singular().all(|s| s.x == vec![0.0, 0.0]));
}

#[test]
fn disk_exact_set_matches_enumeration() {
    let pos = lattice();
    let wf = exact_wavefront(&PhantomSpec::disk(vec![0.0, 0.0], 1.0, 1.0, 0.0), 72, &pos).unwrap();
    let step = TAU / 72.0;
    let cell = 0.125;
    let mut expected = BTreeSet::new();
    for i in 0..25 {
        for j in 0..25 {
            let (x, y) = (-1.5 + i as f64 * cell, -1.5 + j as f64 * cell);
            if ((x * x + y * y).sqrt() - 1.0).abs() <= 0.5 * cell * 2f64.sqrt() {
                let a = y.atan2(x).rem_euclid(TAU);
                for b in [a, a + PI] {
                    let k = (b.rem_euclid(TAU) / step).round() as usize % 72;
                    expected.insert(((x * 1e9).round() as i64, (y * 1e9).round() as i64, k));
                }
            }
        }
    }
    assert!(!expected.is_empty());
    assert_eq!(keys(&wf), expected);
}

#[test]
fn exact_set_translates_with_the_lattice() {
    let pos = lattice();
    let shift = 0.125 * 3.0;
    let moved = GridSpec::new(pos.shape().to_vec(), pos.spacing().to_vec(), vec![-1.5 + shift, -1.5]).unwrap();
    let a = exact_wavefront(&PhantomSpec::disk(vec![0.0, 0.0], 0.8, 1.0, 0.0), 72, &pos).unwrap();
    let b = exact_wavefront(&PhantomSpec::disk(vec![shift, 0.0], 0.8, 1.0, 0.0), 72, &moved).unwrap();
    assert_eq!(a.singular_count(), b.singular_count());
    for (s, t) in a.singular().zip(b.singular()) {
        assert!((s.x[0] + shift - t.x[0]).abs() < 1e-12 && (s.x[1] - t.x[1]).abs() < 1e-12);
        assert_eq!(s.theta, t.theta);
    }
}

#[test]
fn sharper_deltas_keep_their_flags() {
    let g = grid256();
    let h = g.spacing()[0];
    let p = EstimatorParams::default();
    let flagged = |sigma: f64| {
        let f = rasterize(&PhantomSpec::point_delta(vec![0.0, 0.0], 1.0, sigma), &g).unwrap();
        let wf = estimate_wavefront(&f, &p).unwrap();
        keys(&wf).into_iter().filter(|k| k.0 == 0 && k.1 == 0).collect::<BTreeSet<_>>()
    };
    let wide = flagged(3.0 * h);
    let sharp = flagged(h);
    assert!(wide.is_subset(&sharp), "{} wide vs {} sharp", wide.len(), sharp.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rasterize_is_linear_in_amplitude(a in -5.0f64..5.0, kind in 0usize..4) {
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[64, 64]).unwrap();
        let h = g.spacing()[0];
        let base = match kind {
            0 => PhantomSpec::bump(vec![0.1, 0.0], 0.5, 1.0),
            1 => PhantomSpec::disk(vec![0.0, 0.1], 0.4, 1.0, 2.0 * h),
            2 => PhantomSpec::point_delta(vec![0.05, -0.1], 1.0, 1.5 * h),
            _ => PhantomSpec::new(PhantomKind::SegmentDelta { start: vec![-0.3, 0.0], end: vec![0.3, 0.2] }, 1.0, h),
        };
        let mut scaled = base.clone();
        scaled.amplitude = a;
        let f = rasterize(&base, &g).unwrap();
        let fa = rasterize(&scaled, &g).unwrap();
        prop_assert!(f.values().iter().zip(fa.values()).all(|(x, y)| a * x == *y));
    }
}
