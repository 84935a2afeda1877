//! Convolution with weighted line measures, `(mu * w)(x) = integral upsilon(t) w(x - gamma(t)) dt`.
//!
//! Curves start at the origin and are defined on `(-epsilon, inf)`. The
//! integral is truncated at a support horizon `T` beyond which
//! `x - gamma(t)` never meets the support again for any grid point `x`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antiderivative::{cumulative_antiderivative, TestFunction};
use crate::error::{Error, Result};
use crate::grid::{distance, norm, Direction, GridSpec, SampledField};
use crate::quadrature::integrate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    /// `gamma(t) = t v`; `v` need not be unit length.
    Ray { v: Vec<f64> },
    /// `gamma(t) = (r sin(w t), r (1 - cos(w t)))`, a circle through the origin.
    Arc { radius: f64, rate: f64 },
    /// `gamma(t) = e^{a t} (cos(b t), sin(b t)) - (1, 0)`.
    Spiral { a: f64, b: f64 },
}

impl Curve {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Curve::Ray { v } => !v.is_empty() && v.iter().all(|c| c.is_finite()) && norm(v) > 0.0,
            Curve::Arc { radius, rate } => radius.is_finite() && *radius > 0.0 && rate.is_finite() && *rate != 0.0,
            Curve::Spiral { a, b } => a.is_finite() && b.is_finite() && *b != 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate curve {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Curve::Ray { v } => v.len(),
            _ => 2,
        }
    }

    /// Half-width of the parameter interval below zero on which the curve is defined.
    pub fn epsilon(&self) -> f64 {
        1.0
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        match self {
            Curve::Ray { v } => v.iter().map(|c| c * t).collect(),
            Curve::Arc { radius, rate } => vec![radius * (rate * t).sin(), radius * (1.0 - (rate * t).cos())],
            Curve::Spiral { a, b } => {
                let e = (a * t).exp();
                vec![e * (b * t).cos() - 1.0, e * (b * t).sin()]
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            Curve::Ray { v } => v.clone(),
            Curve::Arc { radius, rate } => {
                vec![radius * rate * (rate * t).cos(), radius * rate * (rate * t).sin()]
            }
            Curve::Spiral { a, b } => {
                let e = (a * t).exp();
                let (s, c) = (b * t).sin_cos();
                vec![e * (a * c - b * s), e * (a * s + b * c)]
            }
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        norm(&self.velocity(t))
    }

    /// Upper bound of `|gamma'|` on `[t_lo, t_hi]`.
    pub fn max_speed(&self, t_lo: f64, t_hi: f64) -> f64 {
        match self {
            Curve::Ray { v } => norm(v),
            Curve::Arc { radius, rate } => (radius * rate).abs(),
            Curve::Spiral { a, b } => {
                let t = if *a >= 0.0 { t_hi } else { t_lo };
                (a * t).exp() * a.hypot(*b)
            }
        }
    }

    /// A time after which `|gamma(t)| > radius` for good, when the curve escapes.
    pub fn escape_time(&self, radius: f64) -> Option<f64> {
        let radius = radius.max(0.0);
        match self {
            Curve::Ray { v } => Some(radius / norm(v)),
            Curve::Arc { .. } => None,
            // |gamma(t) + (1, 0)| = e^{a t} grows monotonically
            Curve::Spiral { a, .. } if *a > 0.0 => Some(((radius + 1.0).ln() / a).max(0.0)),
            Curve::Spiral { .. } => None,
        }
    }

    /// Smallest period of a closed curve.
    pub fn period(&self) -> Option<f64> {
        match self {
            Curve::Arc { rate, .. } => Some(std::f64::consts::TAU / rate.abs()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Unit,
    /// `upsilon(t) = |gamma'(t)|`, giving the arc-length measure.
    ArcLength,
    /// `upsilon(t) = (1 + t)^(-p)`.
    Power { p: f64 },
}

impl Weight {
    pub fn eval(&self, curve: &Curve, t: f64) -> f64 {
        match self {
            Weight::Unit => 1.0,
            Weight::ArcLength => curve.speed(t),
            Weight::Power { p } => (1.0 + t).powf(-p),
        }
    }
}

pub fn arc_length_weight() -> Weight {
    Weight::ArcLength
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonSource {
    Scanned,
    Asserted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportHorizon {
    pub t: f64,
    pub source: HorizonSource,
}

impl SupportHorizon {
    /// A caller-supplied truncation, for curves that keep re-entering the support.
    pub fn asserted(t: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be finite and non-negative, got {t}")));
        }
        Ok(Self { t, source: HorizonSource::Asserted })
    }
}

/// Scans `gamma` for the last time any grid point `x` has `x - gamma(t)` in
/// the support box of `field`.
///
/// That set is the box `[domain_lo - support_hi, domain_hi - support_lo]`,
/// where the support box is widened by one cell. The scan step keeps the
/// curve moving at most half a cell between samples, and the scan ends early
/// once the curve has left a ball around that box for good.
pub fn validate_support_bounded(
    curve: &Curve,
    field: &SampledField,
    domain: &GridSpec,
    t_probe_max: f64,
) -> Result<SupportHorizon> {
    curve.validate()?;
    if curve.dim() != field.grid().dim() || domain.dim() != field.grid().dim() {
        return Err(Error::InvalidParameter("curve, field and domain dimensions differ".into()));
    }
    if !(t_probe_max.is_finite() && t_probe_max > 0.0) {
        return Err(Error::InvalidParameter("t_probe_max must be positive".into()));
    }
    let (slo, shi) = field.nonzero_bbox().ok_or(Error::EmptySupport)?;
    let pad = field.grid().max_spacing();
    let (dlo, dhi) = domain.bounds();
    let lo: Vec<f64> = dlo.iter().zip(&shi).map(|(d, s)| d - s - pad).collect();
    let hi: Vec<f64> = dhi.iter().zip(&slo).map(|(d, s)| d - s + pad).collect();
    let inside = |p: &[f64]| p.iter().zip(&lo).zip(&hi).all(|((x, l), u)| *x >= *l && *x <= *u);
    let h = field.grid().min_spacing().min(domain.min_spacing());
    let reach = lo.iter().zip(&hi).map(|(l, u)| l.abs().max(u.abs()).powi(2)).sum::<f64>().sqrt();
    let t_stop = curve.escape_time(reach).map_or(t_probe_max, |te| te.min(t_probe_max));
    let mut t = 0.0;
    let mut last_inside = None;
    let mut dt = 0.0;
    while t <= t_stop {
        if inside(&curve.point(t)) {
            last_inside = Some(t);
        }
        let speed = curve.speed(t).max(curve.speed(t + dt)).max(1e-12);
        dt = (0.5 * h / speed).min(t_probe_max);
        t += dt;
    }
    match last_inside {
        None => Ok(SupportHorizon { t: 0.0, source: HorizonSource::Scanned }),
        Some(t_last) if t_stop == t_probe_max && t_last + dt >= t_probe_max => Err(Error::HorizonNotFound(t_probe_max)),
        Some(t_last) => Ok(SupportHorizon { t: t_last + dt, source: HorizonSource::Scanned }),
    }
}

/// Last time `gamma(t)` lies in the support ball of a test function.
pub fn horizon_for_test_function(curve: &Curve, phi: &TestFunction, t_probe_max: f64) -> Result<SupportHorizon> {
    curve.validate()?;
    let h = phi.radius() / 64.0;
    let mut t = 0.0;
    let mut last = None;
    let mut dt = 0.0;
    while t <= t_probe_max {
        if distance(&curve.point(t), phi.center()) <= phi.radius() {
            last = Some(t);
        }
        dt = h / curve.speed(t).max(1e-12);
        t += dt;
    }
    match last {
        None => Ok(SupportHorizon { t: 0.0, source: HorizonSource::Scanned }),
        Some(tl) if tl + dt >= t_probe_max => Err(Error::HorizonNotFound(t_probe_max)),
        Some(tl) => Ok(SupportHorizon { t: tl + dt, source: HorizonSource::Scanned }),
    }
}

/// `<mu, phi> = integral_0^T upsilon(t) phi(gamma(t)) dt`.
pub fn line_distribution_pairing(curve: &Curve, weight: &Weight, phi: &TestFunction, horizon: &SupportHorizon) -> Result<f64> {
    curve.validate()?;
    let t_end = horizon.t;
    let length = t_end * curve.max_speed(0.0, t_end);
    let panels = ((8.0 * length / phi.radius()).ceil() as usize).clamp(1, 1 << 16);
    integrate(|t| weight.eval(curve, t) * phi.eval(&curve.point(t)), 0.0, t_end, 1e-9, panels)
}

fn check_planar(field: &SampledField, curve: &Curve, out: &GridSpec) -> Result<()> {
    curve.validate()?;
    if field.grid().dim() != 2 || curve.dim() != 2 || out.dim() != 2 {
        return Err(Error::InvalidParameter("line convolutions are implemented for planar fields".into()));
    }
    Ok(())
}

/// Trapezoidal quadrature of `(mu * w)(x)` on the cells of `output_grid`.
///
/// The parameter step keeps consecutive curve samples within half a cell.
pub fn convolve_quadrature(
    field: &SampledField,
    curve: &Curve,
    weight: &Weight,
    horizon: &SupportHorizon,
    output_grid: &GridSpec,
) -> Result<SampledField> {
    check_planar(field, curve, output_grid)?;
    let g = field.grid();
    let t_end = horizon.t;
    let Some((ilo, ihi)) = field.nonzero_index_box() else {
        return SampledField::new(output_grid.clone(), vec![0.0; output_grid.len()], 0);
    };
    if t_end == 0.0 {
        return SampledField::new(output_grid.clone(), vec![0.0; output_grid.len()], 0);
    }
    let h = g.min_spacing().min(output_grid.min_spacing());
    let nominal = 0.5 * h / curve.max_speed(0.0, t_end).max(1e-300);
    let n = ((t_end / nominal).ceil() as usize).max(1);
    let dt = t_end / n as f64;
    // per-node weight and shift in field index units
    let nodes: Vec<(f64, [f64; 2])> = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            let tw = if k == 0 || k == n { 0.5 } else { 1.0 };
            let p = curve.point(t);
            (tw * dt * weight.eval(curve, t), [p[0] / g.spacing()[0], p[1] / g.spacing()[1]])
        })
        .collect();
    // output cell j maps to field index q(j) = a + b j along each axis
    let a: Vec<f64> = (0..2).map(|d| (output_grid.origin()[d] - g.origin()[d]) / g.spacing()[d]).collect();
    let b: Vec<f64> = (0..2).map(|d| output_grid.spacing()[d] / g.spacing()[d]).collect();
    let lo: Vec<f64> = ilo.iter().map(|&i| i as f64 - 1.0).collect();
    let hi: Vec<f64> = ihi.iter().map(|&i| i as f64 + 1.0).collect();
    let n1 = output_grid.shape()[1];
    let range = |d: usize, shift: f64, len: usize| -> Option<(usize, usize)> {
        let jl = ((lo[d] + shift - a[d]) / b[d]).ceil().max(0.0);
        let jh = ((hi[d] + shift - a[d]) / b[d]).floor().min(len as f64 - 1.0);
        (jl <= jh).then_some((jl as usize, jh as usize))
    };
    let mut values = vec![0.0; output_grid.len()];
    values.par_chunks_mut(n1).enumerate().for_each(|(i, row)| {
        let q0 = a[0] + b[0] * i as f64;
        for (w, s) in &nodes {
            let p0 = q0 - s[0];
            if p0 < lo[0] || p0 > hi[0] {
                continue;
            }
            let Some((jl, jh)) = range(1, s[1], n1) else { continue };
            for (j, out) in row.iter_mut().enumerate().take(jh + 1).skip(jl) {
                *out += w * field.interp2(p0, a[1] + b[1] * j as f64 - s[1]);
            }
        }
    });
    SampledField::new(output_grid.clone(), values, 0)
}

/// Default memory ceiling for the lifted field of [`convolve_pullback`].
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

/// `(mu * w)` as an antiderivative of the lifted field `W(x, y) = upsilon(y) w(x - gamma(y))`.
///
/// `W` is sampled on `y_resolution` planes from just below zero up to `T`,
/// with `y = 0` on the lattice. The result is the plane `y = 0` of
/// `I_{(0, 0, -1)} W`.
pub fn convolve_pullback(
    field: &SampledField,
    curve: &Curve,
    weight: &Weight,
    horizon: &SupportHorizon,
    y_resolution: usize,
    memory_budget: u64,
) -> Result<SampledField> {
    let g = field.grid();
    check_planar(field, curve, g)?;
    if y_resolution < 8 {
        return Err(Error::InvalidParameter("y_resolution must be at least 8".into()));
    }
    let required = (g.len() as u64) * (y_resolution as u64) * 8;
    if required > memory_budget {
        return Err(Error::MemoryBudget { required, budget: memory_budget });
    }
    let t_end = horizon.t;
    if t_end <= 0.0 {
        return SampledField::new(g.clone(), vec![0.0; g.len()], 0);
    }
    let below = 0.5 * curve.epsilon();
    let dy0 = (t_end + below) / (y_resolution - 1) as f64;
    let k0 = ((below / dy0).round() as usize).min(y_resolution - 5);
    let dy = t_end / (y_resolution - 1 - k0) as f64;
    let y_at = |k: usize| (k as f64 - k0 as f64) * dy;
    let lifted_grid = GridSpec::new(
        vec![g.shape()[0], g.shape()[1], y_resolution],
        vec![g.spacing()[0], g.spacing()[1], dy],
        vec![g.origin()[0], g.origin()[1], -(k0 as f64) * dy],
    )?;
    // the ray sum gives its last sample full weight; halving the top plane
    // restores the trapezoid end weight when the horizon cuts the support
    let planes: Vec<(f64, Vec<f64>)> = (0..y_resolution)
        .map(|k| {
            let y = y_at(k);
            let end = if k == y_resolution - 1 { 0.5 } else { 1.0 };
            (end * weight.eval(curve, y), curve.point(y))
        })
        .collect();
    let n1 = g.shape()[1];
    let mut lifted = vec![0.0; lifted_grid.len()];
    lifted.par_chunks_mut(n1 * y_resolution).enumerate().for_each(|(i, block)| {
        for j in 0..n1 {
            let x = g.coordinate(&[i, j]);
            for (k, (w, p)) in planes.iter().enumerate() {
                if *w != 0.0 {
                    block[j * y_resolution + k] = w * field.interpolate(&[x[0] - p[0], x[1] - p[1]]);
                }
            }
        }
    });
    let lifted = SampledField::new(lifted_grid.clone(), lifted, 0)?;
    let out_grid = GridSpec::new(
        lifted_grid.shape()[..2].iter().copied().chain([4]).collect(),
        lifted_grid.spacing().to_vec(),
        vec![g.origin()[0], g.origin()[1], 0.0],
    )?;
    let down = Direction::new(vec![0.0, 0.0, -1.0])?;
    let full = cumulative_antiderivative(&lifted, &down, &out_grid)?;
    let plane: Vec<f64> = full.values().iter().step_by(4).copied().collect();
    SampledField::new(g.clone(), plane, 0)
}
