use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Direction, GridSpec, SampledField};

/// Index range `[k_lo, k_hi]` of ray steps `q + k dq` that stay inside the box `[lo, hi]`.
fn steps_inside(q: &[f64], dq: &[f64], lo: &[f64], hi: &[f64]) -> Option<(i64, i64)> {
    let mut klo = f64::NEG_INFINITY;
    let mut khi = f64::INFINITY;
    for a in 0..q.len() {
        if dq[a] == 0.0 {
            if q[a] < lo[a] || q[a] > hi[a] {
                return None;
            }
        } else {
            let t1 = (lo[a] - q[a]) / dq[a];
            let t2 = (hi[a] - q[a]) / dq[a];
            klo = klo.max(t1.min(t2));
            khi = khi.min(t1.max(t2));
        }
    }
    let a = klo.ceil().max(0.0);
    let b = khi.floor();
    (a <= b).then_some((a as i64, b as i64))
}

/// Trapezoidal ray sum `step * (f(q)/2 + sum_k f(q + k dq))` over the support box.
fn ray_sum(field: &SampledField, q: &[f64], dq: &[f64], lo: &[f64], hi: &[f64], step: f64) -> f64 {
    let Some((ka, kb)) = steps_inside(q, dq, lo, hi) else {
        return 0.0;
    };
    let d = q.len();
    let mut acc = 0.0;
    if d == 2 {
        for k in ka..=kb {
            let kf = k as f64;
            let w = if k == 0 { 0.5 } else { 1.0 };
            acc += w * field.interp2(q[0] + kf * dq[0], q[1] + kf * dq[1]);
        }
    } else {
        let mut p = vec![0.0; d];
        for k in ka..=kb {
            let kf = k as f64;
            for a in 0..d {
                p[a] = q[a] + kf * dq[a];
            }
            let w = if k == 0 { 0.5 } else { 1.0 };
            acc += w * field.interpolate_index(&p);
        }
    }
    acc * step
}

/// Index-space box, one cell wider than the nonzero cells, outside which interpolation is zero.
fn support_index_box(field: &SampledField) -> Option<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = field.nonzero_index_box()?;
    Some((lo.iter().map(|&i| i as f64 - 1.0).collect(), hi.iter().map(|&i| i as f64 + 1.0).collect()))
}

/// Trapezoidal evaluation of `I_v w` at the cells of `output_grid`.
///
/// The ray through each output point is sampled at the field's minimum
/// spacing with multilinear interpolation, zero outside the field grid.
pub fn cumulative_antiderivative(field: &SampledField, v: &Direction, output_grid: &GridSpec) -> Result<SampledField> {
    let g = field.grid();
    if v.dim() != g.dim() || output_grid.dim() != g.dim() {
        return Err(Error::InvalidDirection("direction, field and output grid dimensions differ".into()));
    }
    let step = g.min_spacing();
    let dq: Vec<f64> = (0..g.dim()).map(|a| -step * v.as_slice()[a] / g.spacing()[a]).collect();
    let mut values = vec![0.0; output_grid.len()];
    if let Some((lo, hi)) = support_index_box(field) {
        values.par_iter_mut().enumerate().for_each(|(flat, out)| {
            let q = g.index_coordinate(&output_grid.coordinate_of_flat(flat));
            *out = ray_sum(field, &q, &dq, &lo, &hi, step);
        });
    }
    SampledField::new(output_grid.clone(), values, 0)
}

/// Orthonormal basis of the hyperplane orthogonal to `v`.
pub(crate) fn orthogonal_basis(v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap());
    for &a in &order {
        if basis.len() == d - 1 {
            break;
        }
        let mut e = vec![0.0; d];
        e[a] = 1.0;
        for b in std::iter::once(v).chain(basis.iter().map(|b| b.as_slice())) {
            let c: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(e.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Total line integrals `X_v w(u)` on a lattice over the hyperplane orthogonal to `v`.
///
/// For coordinate directions the lattice is the field grid with that axis
/// dropped; otherwise it covers the projected grid at the minimum spacing.
/// Each value uses the same ray quadrature as [`cumulative_antiderivative`],
/// started from the far end of the grid.
pub fn xray_transform(field: &SampledField, v: &Direction) -> Result<SampledField> {
    let g = field.grid();
    if v.dim() != g.dim() || g.dim() < 2 {
        return Err(Error::InvalidDirection("X-ray transform needs a direction matching a field of dim >= 2".into()));
    }
    let vv = v.as_slice();
    let t_end = g.max_projection(vv);
    let (basis, out_grid) = match v.axis() {
        Some((axis, _)) => {
            let keep: Vec<usize> = (0..g.dim()).filter(|&a| a != axis).collect();
            let basis: Vec<Vec<f64>> = keep
                .iter()
                .map(|&a| {
                    let mut e = vec![0.0; g.dim()];
                    e[a] = 1.0;
                    e
                })
                .collect();
            let grid = GridSpec::new(
                keep.iter().map(|&a| g.shape()[a]).collect(),
                keep.iter().map(|&a| g.spacing()[a]).collect(),
                keep.iter().map(|&a| g.origin()[a]).collect(),
            )?;
            (basis, grid)
        }
        None => {
            let basis = orthogonal_basis(vv);
            let h = g.min_spacing();
            let mut shape = Vec::new();
            let mut origin = Vec::new();
            for b in &basis {
                let lo = g.min_projection(b);
                let hi = g.max_projection(b);
                shape.push(((hi - lo) / h).ceil() as usize + 1);
                origin.push(lo);
            }
            let spacing = vec![h; basis.len()];
            (basis, GridSpec::new(shape, spacing, origin)?)
        }
    };
    let step = g.min_spacing();
    let dq: Vec<f64> = (0..g.dim()).map(|a| -step * vv[a] / g.spacing()[a]).collect();
    let mut values = vec![0.0; out_grid.len()];
    if let Some((lo, hi)) = support_index_box(field) {
        values.par_iter_mut().enumerate().for_each(|(flat, out)| {
            let u = out_grid.coordinate_of_flat(flat);
            let x: Vec<f64> = (0..g.dim())
                .map(|a| t_end * vv[a] + basis.iter().zip(&u).map(|(b, c)| b[a] * c).sum::<f64>())
                .collect();
            let q = g.index_coordinate(&x);
            *out = ray_sum(field, &q, &dq, &lo, &hi, step);
        });
    }
    SampledField::new(out_grid, values, 0)
}
