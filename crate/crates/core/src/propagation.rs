//! Predicted wavefront supersets for antiderivatives and line convolutions,
//! and checks of estimated sets against them.
//!
//! For `I_v w` the prediction is `WF(w)` plus every `(x + t v, eta)` with
//! `(x, eta)` in `WF(w)` and `eta . v = 0`. For convolution with a curve it
//! is `WF(w)` plus `(x + gamma(t), xi)` wherever `xi . gamma'(t) = 0`.
//! Directions are compared modulo sign throughout.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{angle_gap_mod_sign, distance, Direction, PhaseSpaceSample, WavefrontSet};
use crate::line_convolution::Curve;

/// Slack added to tolerance comparisons so that samples exactly at a tolerance count as inside.
const TOL_SLACK: f64 = 1e-9;

/// Bisection stops once the bracket is this short.
const ROOT_TOL: f64 = 1e-13;

/// `R_v(x) = {x + t v : t >= 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub base: Vec<f64>,
    pub v: Direction,
}

impl Ray {
    pub fn point(&self, t: f64) -> Vec<f64> {
        self.base.iter().zip(self.v.as_slice()).map(|(b, v)| b + t * v).collect()
    }

    /// Distance from `x` to the ray.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let rel: Vec<f64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let t = self.v.dot(&rel).max(0.0);
        distance(x, &self.point(t))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.distance(x) <= tol
    }
}

/// A position and a direction, serialized with the direction as a polar angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointRepr", into = "PointRepr")]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub theta: Direction,
}

#[derive(Serialize, Deserialize)]
struct PointRepr {
    x: Vec<f64>,
    theta_rad: f64,
}

impl TryFrom<PointRepr> for PhasePoint {
    type Error = Error;
    fn try_from(r: PointRepr) -> Result<Self> {
        if r.x.len() != 2 || !r.theta_rad.is_finite() {
            return Err(Error::InvalidParameter("phase points are planar with a finite angle".into()));
        }
        Ok(Self { x: r.x, theta: Direction::from_angle(r.theta_rad) })
    }
}

impl From<PhasePoint> for PointRepr {
    fn from(p: PhasePoint) -> Self {
        PointRepr { theta_rad: p.theta.angle(), x: p.x }
    }
}

impl From<&PhaseSpaceSample> for PhasePoint {
    fn from(s: &PhaseSpaceSample) -> Self {
        Self { x: s.x.clone(), theta: s.theta.clone() }
    }
}

/// A translated singularity with the curve time that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatedSample {
    #[serde(flatten)]
    pub point: PhasePoint,
    pub t: f64,
    /// `theta . gamma'(t) / |gamma'(t)|` at the generating time.
    pub orthogonality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSet {
    pub base: Vec<PhasePoint>,
    pub propagated: Vec<PropagatedSample>,
    pub horizon: f64,
    pub t_step: f64,
    pub angle_tol: f64,
}

impl PredictedSet {
    pub fn points(&self) -> impl Iterator<Item = &PhasePoint> {
        self.base.iter().chain(self.propagated.iter().map(|p| &p.point))
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.propagated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Discretisation of the curve parameter and the orthogonality tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    /// Curve-time step; defaults to half the smallest position-lattice spacing
    /// divided by the largest curve speed on `[0, horizon]`.
    pub t_step: Option<f64>,
    /// Angular tolerance of the orthogonality filter; defaults to half a direction step.
    pub angle_tol: Option<f64>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { t_step: None, angle_tol: None }
    }
}

fn resolve(wf: &WavefrontSet, curve: &Curve, horizon: f64, opts: &PredictOptions) -> Result<(f64, f64)> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let angle_tol = opts.angle_tol.unwrap_or(0.5 * wf.angular_step());
    if !(angle_tol >= 0.0 && angle_tol < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("angle tolerance {angle_tol} outside [0, pi/2)")));
    }
    let t_step = match opts.t_step {
        Some(s) => s,
        None => {
            let h = wf.position_grid().map(|g| g.min_spacing()).unwrap_or(horizon / 256.0);
            0.5 * h / curve.max_speed(0.0, horizon).max(1e-12)
        }
    };
    if !(t_step.is_finite() && t_step > 0.0) {
        return Err(Error::InvalidParameter(format!("t_step must be positive, got {t_step}")));
    }
    Ok((t_step, angle_tol))
}

/// Propagation along the ray `t v`, `0 <= t <= horizon`.
pub fn predict_ray(wf: &WavefrontSet, v: &Direction, horizon: f64, opts: &PredictOptions) -> Result<PredictedSet> {
    predict_curve(wf, &Curve::Ray { v: v.as_slice().to_vec() }, horizon, opts)
}

fn orthogonality(curve: &Curve, theta: &Direction, t: f64) -> f64 {
    let g = curve.velocity(t);
    let s = crate::grid::norm(&g);
    if s == 0.0 {
        0.0
    } else {
        theta.dot(&g) / s
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while b - a > ROOT_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Propagation along a curve: every singular `(x0, xi)` is carried to
/// `x0 + gamma(t)` at probe times where `xi` is within `angle_tol` of
/// orthogonal to `gamma'(t)`, and at bisected roots of `xi . gamma'(t)`.
pub fn predict_curve(wf: &WavefrontSet, curve: &Curve, horizon: f64, opts: &PredictOptions) -> Result<PredictedSet> {
    curve.validate()?;
    let (t_step, angle_tol) = resolve(wf, curve, horizon, opts)?;
    let steps = (horizon / t_step).ceil() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| (k as f64 * t_step).min(horizon)).collect();
    let cos_tol = angle_tol.sin();
    let base: Vec<PhasePoint> = wf.singular().map(PhasePoint::from).collect();
    let mut propagated = Vec::new();
    for p in &base {
        let f = |t: f64| orthogonality(curve, &p.theta, t);
        let mut emit = |t: f64, o: f64| {
            let g = curve.point(t);
            let x = p.x.iter().zip(&g).map(|(a, b)| a + b).collect();
            propagated.push(PropagatedSample { point: PhasePoint { x, theta: p.theta.clone() }, t, orthogonality: o });
        };
        let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        for k in 0..times.len() {
            if values[k].abs() <= cos_tol {
                emit(times[k], values[k]);
            }
            if k + 1 < times.len() && values[k] != 0.0 && values[k + 1] != 0.0 && (values[k] < 0.0) != (values[k + 1] < 0.0) {
                let r = bisect(f, times[k], times[k + 1]);
                emit(r, f(r));
            }
        }
    }
    Ok(PredictedSet { base, propagated, horizon, t_step, angle_tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub space: f64,
    pub angle: f64,
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        if self.space > 0.0 && self.angle > 0.0 && self.space.is_finite() && self.angle.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("tolerances must be positive, got {self:?}")))
        }
    }

    fn near(&self, a: &PhasePoint, x: &[f64], theta: f64) -> bool {
        distance(&a.x, x) <= self.space + TOL_SLACK && angle_gap_mod_sign(a.theta.angle(), theta) <= self.angle + TOL_SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: Vec<f64>,
    pub theta_rad: f64,
    pub decay_order: f64,
    /// Distance to the nearest reference point whose direction is within tolerance.
    pub nearest_distance: Option<f64>,
    /// Smallest direction gap among reference points within the spatial tolerance.
    pub nearest_angle_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub checked: usize,
    pub contained: usize,
    pub violations: Vec<Violation>,
    pub tolerances: Tolerances,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.contained as f64 / self.checked as f64
        }
    }
}

/// Spatial hash of reference points with bucket size equal to the spatial tolerance.
struct PointIndex<'a> {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<&'a PhasePoint>>,
    all: Vec<&'a PhasePoint>,
}

impl<'a> PointIndex<'a> {
    fn new(points: impl Iterator<Item = &'a PhasePoint>, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<&PhasePoint>> = HashMap::new();
        let mut all = Vec::new();
        for p in points {
            buckets.entry(Self::key(&p.x, cell)).or_default().push(p);
            all.push(p);
        }
        Self { cell, buckets, all }
    }

    fn key(x: &[f64], cell: f64) -> (i64, i64) {
        ((x[0] / cell).floor() as i64, (x[1] / cell).floor() as i64)
    }

    fn any_near(&self, x: &[f64], theta: f64, tol: &Tolerances) -> bool {
        let (i, j) = Self::key(x, self.cell);
        (-1..=1).any(|di| {
            (-1..=1).any(|dj| self.buckets.get(&(i + di, j + dj)).is_some_and(|b| b.iter().any(|p| tol.near(p, x, theta))))
        })
    }

    fn violation(&self, s: &PhaseSpaceSample, tol: &Tolerances) -> Violation {
        let theta = s.theta.angle();
        let nearest_distance = self
            .all
            .iter()
            .filter(|p| angle_gap_mod_sign(p.theta.angle(), theta) <= tol.angle + TOL_SLACK)
            .map(|p| distance(&p.x, &s.x))
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
        let nearest_angle_gap = self
            .all
            .iter()
            .filter(|p| distance(&p.x, &s.x) <= tol.space + TOL_SLACK)
            .map(|p| angle_gap_mod_sign(p.theta.angle(), theta))
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
        Violation { x: s.x.clone(), theta_rad: theta, decay_order: s.decay_order, nearest_distance, nearest_angle_gap }
    }
}

fn planar(wf: &WavefrontSet) -> Result<()> {
    if wf.samples().iter().any(|s| s.x.len() != 2) {
        return Err(Error::InvalidParameter("wavefront checks are implemented for planar sets".into()));
    }
    Ok(())
}

/// Counts the singular samples of `estimated` lying within the tolerances of a predicted point.
pub fn check_containment(
    estimated: &WavefrontSet,
    predicted: &PredictedSet,
    tol_space: f64,
    tol_angle: f64,
) -> Result<ContainmentReport> {
    let tolerances = Tolerances { space: tol_space, angle: tol_angle };
    tolerances.validate()?;
    planar(estimated)?;
    let index = PointIndex::new(predicted.points(), tol_space);
    let mut report = ContainmentReport { checked: 0, contained: 0, violations: Vec::new(), tolerances };
    for s in estimated.singular() {
        report.checked += 1;
        if index.any_near(&s.x, s.theta.angle(), &tolerances) {
            report.contained += 1;
        } else {
            report.violations.push(index.violation(s, &tolerances));
        }
    }
    Ok(report)
}

/// The characteristic set of `D_v`, all positions with directions orthogonal to `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSet {
    pub v: Direction,
    /// Samples with `|theta . v|` at most this are characteristic.
    pub max_abs_dot: f64,
}

impl CharacteristicSet {
    pub fn contains(&self, theta: &Direction) -> bool {
        theta.dot(self.v.as_slice()).abs() <= self.max_abs_dot + TOL_SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrolocalBoundReport {
    pub checked: usize,
    pub characteristic: CharacteristicSet,
    pub near_input: usize,
    pub violations: Vec<Violation>,
    pub tolerances: Tolerances,
}

impl MicrolocalBoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn same_discretization(a: &WavefrontSet, b: &WavefrontSet) -> Result<()> {
    let grids_differ = match (a.position_grid(), b.position_grid()) {
        (Some(ga), Some(gb)) => !ga.same_geometry(gb, 1e-9),
        _ => false,
    };
    if a.direction_count() != b.direction_count() || grids_differ {
        return Err(Error::MismatchedDiscretization(format!(
            "{} vs {} directions{}",
            a.direction_count(),
            b.direction_count(),
            if grids_differ { ", different position lattices" } else { "" }
        )));
    }
    Ok(())
}

/// Flags singular output samples that are neither near a singular input
/// sample nor characteristic for `D_v`.
pub fn microlocal_bound_check(
    estimated_out: &WavefrontSet,
    estimated_in: &WavefrontSet,
    v: &Direction,
    tol_space: f64,
    tol_angle: f64,
) -> Result<MicrolocalBoundReport> {
    let tolerances = Tolerances { space: tol_space, angle: tol_angle };
    tolerances.validate()?;
    same_discretization(estimated_out, estimated_in)?;
    planar(estimated_out)?;
    let input: Vec<PhasePoint> = estimated_in.singular().map(PhasePoint::from).collect();
    let index = PointIndex::new(input.iter(), tol_space);
    let characteristic = CharacteristicSet { v: v.clone(), max_abs_dot: tol_angle.sin() };
    let mut report =
        MicrolocalBoundReport { checked: 0, characteristic, near_input: 0, violations: Vec::new(), tolerances };
    for s in estimated_out.singular() {
        report.checked += 1;
        if index.any_near(&s.x, s.theta.angle(), &tolerances) {
            report.near_input += 1;
        } else if !report.characteristic.contains(&s.theta) {
            report.violations.push(index.violation(s, &tolerances));
        }
    }
    Ok(report)
}

/// `U = union over 0 <= t <= t1 of (U0 + t v)` for a union `U0` of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    /// Closed boxes `[lo, hi]`.
    pub boxes: Vec<(Vec<f64>, Vec<f64>)>,
    pub v: Direction,
    pub t1: f64,
}

impl TubeSpec {
    pub fn new(boxes: Vec<(Vec<f64>, Vec<f64>)>, v: Direction, t1: f64) -> Result<Self> {
        if !(t1.is_finite() && t1 > 0.0) {
            return Err(Error::InvalidParameter(format!("tube length must be positive, got {t1}")));
        }
        for (lo, hi) in &boxes {
            if lo.len() != v.dim() || hi.len() != v.dim() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                return Err(Error::InvalidParameter(format!("box {lo:?}..{hi:?} is not a valid box")));
            }
        }
        Ok(Self { boxes, v, t1 })
    }

    /// Whether `x` lies in `U0` inflated by `tol` per axis.
    pub fn base_contains(&self, x: &[f64], tol: f64) -> bool {
        self.boxes.iter().any(|(lo, hi)| x.iter().zip(lo).zip(hi).all(|((c, l), u)| *c >= l - tol && *c <= u + tol))
    }

    /// Whether some `t` in `[0, t1]` puts `x - t v` inside an inflated box.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let v = self.v.as_slice();
        self.boxes.iter().any(|(lo, hi)| {
            let (mut a, mut b) = (0.0f64, self.t1);
            for k in 0..x.len() {
                let (l, u) = (lo[k] - tol, hi[k] + tol);
                if v[k] == 0.0 {
                    if x[k] < l || x[k] > u {
                        return false;
                    }
                } else {
                    let (t_l, t_u) = ((x[k] - u) / v[k], (x[k] - l) / v[k]);
                    a = a.max(t_l.min(t_u));
                    b = b.min(t_l.max(t_u));
                }
            }
            a <= b
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    /// No singular output sample in `U0 x {eta0}`.
    pub output_clear_on_base: bool,
    /// No singular input sample in `U x {eta0}`.
    pub input_clear_on_tube: bool,
    /// No singular output sample in `U x {eta0}`.
    pub output_clear_on_tube: bool,
    pub vacuous: bool,
    pub holds: bool,
    pub tolerances: Tolerances,
}

/// Evaluates the tube implication on discrete sets.
///
/// Hypotheses are tested on the sets inflated by `tol_space` (absence from a
/// neighbourhood), the conclusion on the tube itself.
pub fn tube_extension_check(
    estimated_out: &WavefrontSet,
    estimated_in: &WavefrontSet,
    tube: &TubeSpec,
    eta0: &Direction,
    tol_space: f64,
    tol_angle: f64,
) -> Result<TubeReport> {
    let tolerances = Tolerances { space: tol_space, angle: tol_angle };
    tolerances.validate()?;
    if eta0.dot(tube.v.as_slice()).abs() > 1e-9 {
        return Err(Error::InvalidParameter("eta0 must be orthogonal to the tube direction".into()));
    }
    let theta = eta0.angle();
    let aligned = |s: &&PhaseSpaceSample| angle_gap_mod_sign(s.theta.angle(), theta) <= tol_angle + TOL_SLACK;
    let output_clear_on_base = !estimated_out.singular().filter(aligned).any(|s| tube.base_contains(&s.x, tol_space));
    let input_clear_on_tube = !estimated_in.singular().filter(aligned).any(|s| tube.contains(&s.x, tol_space));
    let output_clear_on_tube = !estimated_out.singular().filter(aligned).any(|s| tube.contains(&s.x, 0.0));
    let vacuous = !(output_clear_on_base && input_clear_on_tube);
    Ok(TubeReport {
        output_clear_on_base,
        input_clear_on_tube,
        output_clear_on_tube,
        vacuous,
        holds: vacuous || output_clear_on_tube,
        tolerances,
    })
}
