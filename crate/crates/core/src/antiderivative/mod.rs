//! Directional antiderivatives `I_v`, the X-ray transform `X_v` and their
//! action on test functions.
//!
//! `I_v w(x) = integral_0^inf w(x - t v) dt`. Beyond the support along `v`
//! this equals the X-ray transform of the line through `x`, so the output is
//! not compactly supported.

mod cumulative;
mod shear;
mod spectral;
mod test_function;

pub use cumulative::{cumulative_antiderivative, xray_transform};
pub use shear::{antiderivative_general, shear_pullback, shear_pushforward};
pub use spectral::{
    dc_slice_check, odd_symmetrize, spectral_antiderivative, spectral_derivative, symmetrized_antiderivative,
    DcSliceReport,
};
pub use test_function::{
    apply_i_to_test_function, dual_pairing, Psi0, TestFunction, TestFunctionSpec, QUADRATURE_TOL, TEST_CUTOFF,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, Direction, SampledField};

/// Half the cell diagonal, the slack added to support extrema.
fn half_diagonal(field: &SampledField) -> f64 {
    0.5 * norm(field.grid().spacing())
}

fn projection_extrema(field: &SampledField, v: &Direction) -> Result<(f64, f64)> {
    if v.dim() != field.grid().dim() {
        return Err(Error::InvalidDirection(format!(
            "direction has {} components for a {}-dimensional field",
            v.dim(),
            field.grid().dim()
        )));
    }
    let g = field.grid();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (flat, &w) in field.values().iter().enumerate() {
        if w != 0.0 {
            let t = v.dot(&g.coordinate_of_flat(flat));
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    if lo > hi {
        return Err(Error::EmptySupport);
    }
    Ok((lo, hi))
}

/// Lower bound of `x . v` over the support, widened by half a cell diagonal.
pub fn tmin(field: &SampledField, v: &Direction) -> Result<f64> {
    Ok(projection_extrema(field, v)?.0 - half_diagonal(field))
}

pub fn tmax(field: &SampledField, v: &Direction) -> Result<f64> {
    Ok(projection_extrema(field, v)?.1 + half_diagonal(field))
}

/// Built-in lower-bound functions `t_min(u)` on the line coordinate `u = x . v_perp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TminFn {
    Zero,
    Constant(f64),
    Sine { amplitude: f64, wavenumber: f64 },
}

impl TminFn {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            TminFn::Zero => 0.0,
            TminFn::Constant(c) => c,
            TminFn::Sine { amplitude, wavenumber } => amplitude * (wavenumber * u).sin(),
        }
    }
}

impl FromStr for TminFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown t_min function {s:?}"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let f = match name.trim() {
            "zero" if args.is_empty() => TminFn::Zero,
            "constant" => TminFn::Constant(num(args)?),
            "sine" => {
                let (a, k) = args.split_once(',').ok_or_else(bad)?;
                TminFn::Sine { amplitude: num(a)?, wavenumber: num(k)? }
            }
            _ => return Err(bad()),
        };
        Ok(f)
    }
}

impl fmt::Display for TminFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TminFn::Zero => write!(f, "zero"),
            TminFn::Constant(c) => write!(f, "constant:{c}"),
            TminFn::Sine { amplitude, wavenumber } => write!(f, "sine:{amplitude},{wavenumber}"),
        }
    }
}

impl TryFrom<String> for TminFn {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TminFn> for String {
    fn from(f: TminFn) -> String {
        f.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LowerBound {
    Constant(f64),
    Sheared(TminFn),
}

/// Where the support starts and ends along `v`, and where the odd
/// reflection is centred.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportBound {
    pub lower: LowerBound,
    pub t_max: f64,
    pub t0: f64,
}

/// Minimum gap between `t_max` and the reflection centre, in cells.
pub const T0_MIN_CELLS: f64 = 8.0;
/// Minimum gap between `t_max` and the reflection centre, as a fraction of the support width.
pub const T0_WIDTH_FRACTION: f64 = 0.1;

impl SupportBound {
    /// Bounds measured from the field, with `t0` snapped onto the lattice along `v`.
    pub fn for_field(field: &SampledField, v: &Direction) -> Result<Self> {
        let lo = tmin(field, v)?;
        let hi = tmax(field, v)?;
        let (t_origin, h) = spectral::frame_lattice(field.grid(), v)?;
        let raw = hi + (T0_MIN_CELLS * h).max(T0_WIDTH_FRACTION * (hi - lo));
        let t0 = t_origin + ((raw - t_origin) / h).ceil() * h;
        Ok(Self { lower: LowerBound::Constant(lo), t_max: hi, t0 })
    }

    pub fn t_min(&self) -> Option<f64> {
        match self.lower {
            LowerBound::Constant(t) => Some(t),
            LowerBound::Sheared(_) => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t0.is_finite()) {
            return Err(Error::InvalidSupportBound("bounds must be finite".into()));
        }
        if let Some(lo) = self.t_min() {
            if !(lo < self.t_max) {
                return Err(Error::InvalidSupportBound(format!("t_min {lo} is not below t_max {}", self.t_max)));
            }
        }
        if !(self.t_max < self.t0) {
            return Err(Error::InvalidSupportBound(format!(
                "reflection centre {} must exceed t_max {}",
                self.t0, self.t_max
            )));
        }
        Ok(())
    }
}
