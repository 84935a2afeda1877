//! Spectral antiderivative through odd reflection about `t0`.
//!
//! Along each line parallel to `v`, `w*(t) = w(t) - w(2 t0 - t)` has zero
//! mean, so `w*^(tau) / (i tau)` is a smooth periodic antiderivative. It is
//! even about `t0`, equals `I_v w` below `t0`, and is constant (the X-ray
//! value) from `t0` on.

use num_complex::Complex64;
use std::f64::consts::TAU;

use super::SupportBound;
use crate::error::{Error, Result};
use crate::fft::{signed_bin, Planner};
use crate::grid::{Direction, GridSpec, SampledField};

/// A copy of a field resampled so that one axis runs along `v`.
struct Frame {
    kind: FrameKind,
    axis: usize,
    grid: GridSpec,
    values: Vec<f64>,
}

enum FrameKind {
    Same,
    Flipped,
    Rotated { v: [f64; 2], perp: [f64; 2] },
}

/// Origin and spacing of the lattice of `t = x . v` values used by the frame.
pub(crate) fn frame_lattice(grid: &GridSpec, v: &Direction) -> Result<(f64, f64)> {
    match v.axis() {
        Some((a, s)) if s > 0.0 => Ok((grid.origin()[a], grid.spacing()[a])),
        Some((a, _)) => Ok((-grid.axis_coordinate(a, grid.shape()[a] - 1), grid.spacing()[a])),
        None if grid.dim() == 2 => Ok((grid.min_projection(v.as_slice()), grid.min_spacing())),
        None => Err(Error::InvalidDirection(
            "spectral transforms along oblique directions are implemented for planar fields only".into(),
        )),
    }
}

impl Frame {
    fn new(field: &SampledField, v: &Direction) -> Result<Self> {
        let g = field.grid();
        if v.dim() != g.dim() {
            return Err(Error::InvalidDirection("direction and field dimensions differ".into()));
        }
        match v.axis() {
            Some((axis, s)) if s > 0.0 => {
                Ok(Self { kind: FrameKind::Same, axis, grid: g.clone(), values: field.values().to_vec() })
            }
            Some((axis, _)) => {
                let mut origin = g.origin().to_vec();
                origin[axis] = -g.axis_coordinate(axis, g.shape()[axis] - 1);
                let grid = GridSpec::new(g.shape().to_vec(), g.spacing().to_vec(), origin)?;
                let values = flip_axis(field.values(), g.shape(), axis);
                Ok(Self { kind: FrameKind::Flipped, axis, grid, values })
            }
            None => {
                frame_lattice(g, v)?;
                let vv = [v.as_slice()[0], v.as_slice()[1]];
                let perp = [-vv[1], vv[0]];
                let h = g.min_spacing();
                let (t_lo, t_hi) = (g.min_projection(&vv), g.max_projection(&vv));
                let (s_lo, s_hi) = (g.min_projection(&perp), g.max_projection(&perp));
                let shape = vec![((t_hi - t_lo) / h).ceil() as usize + 1, ((s_hi - s_lo) / h).ceil() as usize + 1];
                let grid = GridSpec::new(shape, vec![h, h], vec![t_lo, s_lo])?;
                let values = (0..grid.len())
                    .map(|flat| {
                        let c = grid.coordinate_of_flat(flat);
                        let x = [c[0] * vv[0] + c[1] * perp[0], c[0] * vv[1] + c[1] * perp[1]];
                        field.interpolate(&x)
                    })
                    .collect();
                Ok(Self { kind: FrameKind::Rotated { v: vv, perp }, axis: 0, grid, values })
            }
        }
    }

    /// Maps frame-grid values back onto the original grid.
    fn restore(&self, values: Vec<f64>, original: &GridSpec) -> Result<SampledField> {
        match self.kind {
            FrameKind::Same => SampledField::new(original.clone(), values, 0),
            FrameKind::Flipped => {
                SampledField::new(original.clone(), flip_axis(&values, original.shape(), self.axis), 0)
            }
            FrameKind::Rotated { v, perp } => {
                let f = SampledField::new(self.grid.clone(), values, 0)?;
                let out = (0..original.len())
                    .map(|flat| {
                        let x = original.coordinate_of_flat(flat);
                        let c = [x[0] * v[0] + x[1] * v[1], x[0] * perp[0] + x[1] * perp[1]];
                        f.interpolate_index_clamped(&self.grid.index_coordinate(&c))
                    })
                    .collect();
                SampledField::new(original.clone(), out, 0)
            }
        }
    }
}

fn flip_axis(values: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = (flat / inner) % n;
        *o = values[flat - i * inner + (n - 1 - i) * inner];
    }
    out
}

fn lines(shape: &[usize], axis: usize) -> (usize, usize) {
    (shape[..axis].iter().product(), shape[axis + 1..].iter().product())
}

struct Reflection {
    frame: Frame,
    /// `2 (t0 - t_origin) / h`, the index about which lines are mirrored.
    mirror: usize,
    ext_len: usize,
    ext_grid: GridSpec,
    ext_values: Vec<f64>,
    t0: f64,
}

impl Reflection {
    fn new(field: &SampledField, v: &Direction, bound: &SupportBound) -> Result<Self> {
        bound.validate()?;
        let frame = Frame::new(field, v)?;
        let axis = frame.axis;
        let h = frame.grid.spacing()[axis];
        let t_origin = frame.grid.origin()[axis];
        let m2 = 2.0 * (bound.t0 - t_origin) / h;
        if (m2 - m2.round()).abs() > 1e-6 || m2 < 0.0 {
            return Err(Error::InvalidSupportBound(format!(
                "reflection centre {} is not on the half-lattice along v",
                bound.t0
            )));
        }
        let mirror = m2.round() as usize;
        let n = frame.grid.shape()[axis];
        let ext_len = (2 * n).max(mirror + 2).next_power_of_two();
        let mut shape = frame.grid.shape().to_vec();
        shape[axis] = ext_len;
        let ext_grid = GridSpec::new(shape.clone(), frame.grid.spacing().to_vec(), frame.grid.origin().to_vec())?;
        let (outer, inner) = lines(&shape, axis);
        let mut ext = vec![0.0; ext_grid.len()];
        for o in 0..outer {
            for i in 0..inner {
                let src = |j: usize| frame.values[(o * n + j) * inner + i];
                for j in 0..ext_len {
                    let mut w = if j < n { src(j) } else { 0.0 };
                    if j <= mirror && mirror - j < n {
                        w -= src(mirror - j);
                    }
                    ext[(o * ext_len + j) * inner + i] = w;
                }
            }
        }
        Ok(Self { frame, mirror, ext_len, ext_grid, ext_values: ext, t0: bound.t0 })
    }

    /// Periodic antiderivative of the reflected lines on the extended grid.
    fn antiderivative(&self) -> Vec<f64> {
        let axis = self.frame.axis;
        let h = self.ext_grid.spacing()[axis];
        let t_origin = self.ext_grid.origin()[axis];
        let m = self.ext_len;
        let shape = self.ext_grid.shape();
        let (outer, inner) = lines(shape, axis);
        let mut planner = Planner::default();
        let fwd = planner.plan(m, false);
        let inv = planner.plan(m, true);
        let mut line = vec![Complex64::default(); m];
        let mut out = vec![0.0; self.ext_values.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * m + j) * inner + i;
                let mut dc = 0.0;
                for j in 0..m {
                    let w = self.ext_values[at(j)];
                    line[j] = Complex64::new(w, 0.0);
                    dc -= (t_origin + j as f64 * h - self.t0) * w;
                }
                if dc == 0.0 && line.iter().all(|c| c.re == 0.0) {
                    continue;
                }
                fwd.process(&mut line);
                for (k, c) in line.iter_mut().enumerate() {
                    *c = if k == 0 {
                        Complex64::new(dc, 0.0)
                    } else if 2 * k == m {
                        Complex64::default()
                    } else {
                        let tau = TAU * signed_bin(k, m) as f64 / (m as f64 * h);
                        *c / Complex64::new(0.0, tau)
                    };
                }
                inv.process(&mut line);
                for j in 0..m {
                    out[at(j)] = line[j].re / m as f64;
                }
            }
        }
        out
    }
}

/// The odd reflection `w*` on the extended grid of the `v`-aligned frame.
///
/// For `v = +e_a` the frame is the field grid itself, extended along axis `a`.
pub fn odd_symmetrize(field: &SampledField, v: &Direction, bound: &SupportBound) -> Result<SampledField> {
    let r = Reflection::new(field, v, bound)?;
    SampledField::new(r.ext_grid, r.ext_values, 0)
}

/// The periodic antiderivative of `w*` on the extended frame grid.
pub fn symmetrized_antiderivative(field: &SampledField, v: &Direction, bound: &SupportBound) -> Result<SampledField> {
    let r = Reflection::new(field, v, bound)?;
    let a = r.antiderivative();
    SampledField::new(r.ext_grid, a, 0)
}

/// `I_v w` on the field grid by the reflected spectral method.
///
/// Cells at or beyond `t0` take the value at `t0`, which is the X-ray value
/// of their line.
pub fn spectral_antiderivative(field: &SampledField, v: &Direction, bound: &SupportBound) -> Result<SampledField> {
    let r = Reflection::new(field, v, bound)?;
    let a = r.antiderivative();
    let axis = r.frame.axis;
    let n = r.frame.grid.shape()[axis];
    let m = r.ext_len;
    let (outer, inner) = lines(r.frame.grid.shape(), axis);
    let cap = r.mirror.div_ceil(2);
    let mut vals = vec![0.0; r.frame.grid.len()];
    for o in 0..outer {
        for i in 0..inner {
            for j in 0..n {
                let src = j.min(cap);
                vals[(o * n + j) * inner + i] = a[(o * m + src) * inner + i];
            }
        }
    }
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spectral antiderivative".into()));
    }
    r.frame.restore(vals, field.grid())
}

/// Spectral derivative along `v` using a whole-sample even extension of each line.
pub fn spectral_derivative(field: &SampledField, v: &Direction) -> Result<SampledField> {
    let frame = Frame::new(field, v)?;
    let axis = frame.axis;
    let n = frame.grid.shape()[axis];
    let h = frame.grid.spacing()[axis];
    let m = 2 * n - 2;
    let (outer, inner) = lines(frame.grid.shape(), axis);
    let mut planner = Planner::default();
    let fwd = planner.plan(m, false);
    let inv = planner.plan(m, true);
    let mut line = vec![Complex64::default(); m];
    let mut vals = vec![0.0; frame.values.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            for j in 0..m {
                let src = if j < n { j } else { m - j };
                line[j] = Complex64::new(frame.values[at(src)], 0.0);
            }
            fwd.process(&mut line);
            for (k, c) in line.iter_mut().enumerate() {
                let tau = if 2 * k == m { 0.0 } else { TAU * signed_bin(k, m) as f64 / (m as f64 * h) };
                *c *= Complex64::new(0.0, tau);
            }
            inv.process(&mut line);
            for j in 0..n {
                vals[at(j)] = line[j].re / m as f64;
            }
        }
    }
    frame.restore(vals, field.grid())
}

#[derive(Debug, Clone)]
pub struct DcSliceReport {
    /// Zero-frequency coefficient of the periodic antiderivative, per line.
    pub dc: Vec<f64>,
    /// Centred difference `(W(delta) - W(-delta)) / (2 i delta)` per line.
    pub difference: Vec<f64>,
    pub delta: f64,
    /// Largest `|dc - difference|` relative to the largest `|dc|`.
    pub max_rel_error: f64,
}

/// Compares the zero-frequency slice of the antiderivative with the limit of
/// `w*^(tau) / (i tau)` as `tau -> 0`.
///
/// The limit is approximated by a centred difference one step either side of
/// zero on a lattice `oversample` times finer than the extended grid's.
pub fn dc_slice_check(
    field: &SampledField,
    v: &Direction,
    bound: &SupportBound,
    oversample: usize,
) -> Result<DcSliceReport> {
    if oversample == 0 {
        return Err(Error::InvalidParameter("oversample must be positive".into()));
    }
    let r = Reflection::new(field, v, bound)?;
    let a = r.antiderivative();
    let axis = r.frame.axis;
    let h = r.ext_grid.spacing()[axis];
    let t_origin = r.ext_grid.origin()[axis];
    let m = r.ext_len;
    let delta = TAU / (oversample as f64 * m as f64 * h);
    let (outer, inner) = lines(r.ext_grid.shape(), axis);
    let mut dc = Vec::with_capacity(outer * inner);
    let mut difference = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * m + j) * inner + i;
            dc.push((0..m).map(|j| a[at(j)]).sum::<f64>());
            let mut d = Complex64::default();
            for j in 0..m {
                let s = t_origin + j as f64 * h - r.t0;
                let w = r.ext_values[at(j)];
                d += w * (Complex64::from_polar(1.0, -delta * s) - Complex64::from_polar(1.0, delta * s));
            }
            difference.push((d / Complex64::new(0.0, 2.0 * delta)).re);
        }
    }
    let scale = dc.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = dc.iter().zip(&difference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(DcSliceReport { dc, difference, delta, max_rel_error: if scale > 0.0 { err / scale } else { err } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn flip_is_an_involution() {
        let v: Vec<f64> = (0..24).map(|x| x as f64).collect();
        let f = flip_axis(&v, &[2, 3, 4], 1);
        assert_eq!(f[0], v[8]);
        assert_eq!(flip_axis(&f, &[2, 3, 4], 1), v);
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = make_grid(&[(-4.0, 4.0), (-4.0, 4.0)], &[64, 64]).unwrap();
        let f = SampledField::from_fn(g.clone(), 0, |x| (-2.0 * (x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
        let v = Direction::new(vec![0.0, 1.0]).unwrap();
        let d = spectral_derivative(&f, &v).unwrap();
        for flat in (0..g.len()).step_by(37) {
            let x = g.coordinate_of_flat(flat);
            let exact = -4.0 * x[1] * (-2.0 * (x[0] * x[0] + x[1] * x[1])).exp();
            assert!((d.values()[flat] - exact).abs() < 1e-9, "{x:?}");
        }
    }
}
