//! Line-wise shifts along `v` that flatten a variable lower support bound.
//!
//! Planar fields only: the line coordinate is `u = x . v_perp` with
//! `v_perp = (-v2, v1)`.

use rayon::prelude::*;

use super::{spectral_antiderivative, SupportBound, TminFn};
use crate::error::{Error, Result};
use crate::grid::{Direction, SampledField};

/// Cells kept clear between a shifted support and the grid edge.
const SHEAR_CLEARANCE: f64 = 2.0;

fn perp(v: &Direction) -> Result<[f64; 2]> {
    if v.dim() != 2 {
        return Err(Error::InvalidDirection("shears are implemented for planar fields".into()));
    }
    let s = v.as_slice();
    Ok([-s[1], s[0]])
}

/// `out(x) = field(x + sign * t_min(u) v)` with edge-clamped interpolation.
fn shift(field: &SampledField, v: &Direction, t_min: &TminFn, sign: f64) -> Result<SampledField> {
    let p = perp(v)?;
    let g = field.grid();
    let vv = v.as_slice();
    if field.support_margin() > 0 {
        // every nonzero source cell must land well inside the grid
        let n = g.shape();
        for (flat, &w) in field.values().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let x = g.coordinate_of_flat(flat);
            let s = sign * t_min.eval(x[0] * p[0] + x[1] * p[1]);
            let dest = [x[0] - s * vv[0], x[1] - s * vv[1]];
            let q = g.index_coordinate(&dest);
            let inside = (0..2).all(|a| q[a] >= SHEAR_CLEARANCE && q[a] <= (n[a] - 1) as f64 - SHEAR_CLEARANCE);
            if !inside {
                return Err(Error::ShearOverflow(format!("cell at {x:?} moves to {dest:?}")));
            }
        }
    }
    let mut values = vec![0.0; g.len()];
    values.par_iter_mut().enumerate().for_each(|(flat, out)| {
        let x = g.coordinate_of_flat(flat);
        let s = sign * t_min.eval(x[0] * p[0] + x[1] * p[1]);
        let src = [x[0] + s * vv[0], x[1] + s * vv[1]];
        *out = field.interpolate_index_clamped(&g.index_coordinate(&src));
    });
    let margin = if field.support_margin() > 0 { 1 } else { 0 };
    SampledField::new(g.clone(), values, margin)
}

/// `out(u + t v) = field(u + (t + t_min(u)) v)`: moves each line's lower bound to zero.
///
/// Fields with a support margin are checked for overflow; fields without one
/// (such as antiderivatives) are shifted with their edge values held constant.
pub fn shear_pullback(field: &SampledField, v: &Direction, t_min: &TminFn) -> Result<SampledField> {
    shift(field, v, t_min, 1.0)
}

/// Inverse of [`shear_pullback`].
pub fn shear_pushforward(field: &SampledField, v: &Direction, t_min: &TminFn) -> Result<SampledField> {
    shift(field, v, t_min, -1.0)
}

/// `I_v w` for fields whose support starts at `t_min(u)` on each line.
///
/// The field is sheared so every line starts at zero, integrated spectrally
/// and sheared back.
pub fn antiderivative_general(field: &SampledField, v: &Direction, t_min: &TminFn) -> Result<SampledField> {
    let flat = shear_pullback(field, v, t_min)?;
    let bound = SupportBound::for_field(&flat, v)?;
    let out = spectral_antiderivative(&flat, v, &bound)?;
    shear_pushforward(&out, v, t_min)
}
