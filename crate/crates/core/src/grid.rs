//! Uniform Cartesian grids, sampled fields, directions and phase-space samples.
//!
//! Storage is row-major: the last axis varies fastest. Axis `a` index `i`
//! sits at physical coordinate `origin[a] + i * spacing[a]`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_AXIS_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidGrid("grid must have at least one axis".into()));
        }
        if spacing.len() != shape.len() || origin.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "shape, spacing and origin lengths differ ({}, {}, {})",
                shape.len(),
                spacing.len(),
                origin.len()
            )));
        }
        if let Some(n) = shape.iter().find(|&&n| n < MIN_AXIS_LEN) {
            return Err(Error::InvalidGrid(format!("axis length {n} below {MIN_AXIS_LEN}")));
        }
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::InvalidGrid(format!("spacing must be positive and finite: {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(format!("origin must be finite: {origin:?}")));
        }
        Ok(Self { shape, spacing, origin })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.shape[a + 1];
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    pub fn axis_coordinate(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn coordinate(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|a| self.axis_coordinate(a, idx[a])).collect()
    }

    pub fn coordinate_of_flat(&self, flat: usize) -> Vec<f64> {
        self.coordinate(&self.unravel(flat))
    }

    /// Continuous index coordinates of a physical point.
    pub fn index_coordinate(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|a| (x[a] - self.origin[a]) / self.spacing[a]).collect()
    }

    /// Coordinates of the first and last sample along each axis.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.origin.clone();
        let hi = (0..self.dim()).map(|a| self.axis_coordinate(a, self.shape[a] - 1)).collect();
        (lo, hi)
    }

    /// Maximum of `x . v` over the corners of the sampled box.
    pub fn max_projection(&self, v: &[f64]) -> f64 {
        let (lo, hi) = self.bounds();
        (0..self.dim()).map(|a| (lo[a] * v[a]).max(hi[a] * v[a])).sum()
    }

    pub fn min_projection(&self, v: &[f64]) -> f64 {
        let (lo, hi) = self.bounds();
        (0..self.dim()).map(|a| (lo[a] * v[a]).min(hi[a] * v[a])).sum()
    }

    pub fn same_geometry(&self, other: &GridSpec, tol: f64) -> bool {
        self.shape == other.shape
            && self.spacing.iter().zip(&other.spacing).all(|(a, b)| (a - b).abs() <= tol)
            && self.origin.iter().zip(&other.origin).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Grid whose first sample sits at each lower corner with `length / res` spacing.
pub fn make_grid(extent: &[(f64, f64)], resolution: &[usize]) -> Result<GridSpec> {
    if extent.len() != resolution.len() {
        return Err(Error::InvalidGrid("extent and resolution lengths differ".into()));
    }
    let mut spacing = Vec::with_capacity(extent.len());
    let mut origin = Vec::with_capacity(extent.len());
    for (&(lo, hi), &n) in extent.iter().zip(resolution) {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidGrid(format!("bad extent ({lo}, {hi})")));
        }
        if n == 0 {
            return Err(Error::InvalidGrid("resolution must be positive".into()));
        }
        spacing.push((hi - lo) / n as f64);
        origin.push(lo);
    }
    GridSpec::new(resolution.to_vec(), spacing, origin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: GridSpec,
    values: Vec<f64>,
    support_margin: usize,
}

impl SampledField {
    pub fn new(grid: GridSpec, values: Vec<f64>, support_margin: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at flat index {i}")));
        }
        let f = Self { grid, values, support_margin };
        if support_margin > 0 {
            if let Some(i) = f.margin_violation(support_margin) {
                return Err(Error::InvalidField(format!(
                    "nonzero value at {:?} inside the declared {support_margin}-cell margin",
                    f.grid.unravel(i)
                )));
            }
        }
        Ok(f)
    }

    pub fn zeros(grid: GridSpec, support_margin: usize) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], support_margin }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: GridSpec, support_margin: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.coordinate_of_flat(i))).collect();
        Self::new(grid, values, support_margin)
    }

    fn margin_violation(&self, m: usize) -> Option<usize> {
        let shape = self.grid.shape();
        self.values.iter().enumerate().position(|(flat, &v)| {
            v != 0.0 && {
                let idx = self.grid.unravel(flat);
                idx.iter().zip(shape).any(|(&i, &n)| i < m || i + m >= n)
            }
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support_margin(&self) -> usize {
        self.support_margin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.grid.flat_index(idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 norm including the cell volume.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Index-space bounding box of the nonzero cells.
    pub fn nonzero_index_box(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        let d = self.grid.dim();
        let mut lo = vec![usize::MAX; d];
        let mut hi = vec![0; d];
        let mut any = false;
        for (flat, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                any = true;
                let idx = self.grid.unravel(flat);
                for a in 0..d {
                    lo[a] = lo[a].min(idx[a]);
                    hi[a] = hi[a].max(idx[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Physical bounding box of the nonzero cell centres.
    pub fn nonzero_bbox(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.nonzero_index_box()?;
        Some((self.grid.coordinate(&lo), self.grid.coordinate(&hi)))
    }

    /// Multilinear interpolation at continuous index coordinates, zero outside the grid.
    pub fn interpolate_index(&self, q: &[f64]) -> f64 {
        if self.grid.dim() == 2 {
            return self.interp2(q[0], q[1]);
        }
        interpolate_nd(&self.grid, &self.values, q)
    }

    /// Multilinear interpolation with index coordinates clamped onto the grid.
    pub fn interpolate_index_clamped(&self, q: &[f64]) -> f64 {
        let shape = self.grid.shape();
        let c: Vec<f64> = q.iter().zip(shape).map(|(&v, &n)| v.clamp(0.0, (n - 1) as f64)).collect();
        if self.grid.dim() == 2 {
            return self.interp2(c[0], c[1]);
        }
        interpolate_nd(&self.grid, &self.values, &c)
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.interpolate_index(&self.grid.index_coordinate(x))
    }

    #[inline]
    pub(crate) fn interp2(&self, q0: f64, q1: f64) -> f64 {
        let n0 = self.grid.shape[0] as isize;
        let n1 = self.grid.shape[1] as isize;
        let f0 = q0.floor();
        let f1 = q1.floor();
        let i0 = f0 as isize;
        let i1 = f1 as isize;
        if i0 < -1 || i1 < -1 || i0 >= n0 || i1 >= n1 {
            return 0.0;
        }
        let a = q0 - f0;
        let b = q1 - f1;
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= n0 || j >= n1 {
                0.0
            } else {
                self.values[(i * n1 + j) as usize]
            }
        };
        let v00 = at(i0, i1);
        let v01 = at(i0, i1 + 1);
        let v10 = at(i0 + 1, i1);
        let v11 = at(i0 + 1, i1 + 1);
        (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)
    }

    /// Applies `f` cellwise; the margin is kept only when `f(0) == 0`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let margin = if f(0.0) == 0.0 { self.support_margin } else { 0 };
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect(), margin)
    }

    /// `self + s * other` on identical grids.
    pub fn axpy(&self, s: f64, other: &SampledField) -> Result<Self> {
        if !self.grid.same_geometry(&other.grid, 0.0) {
            return Err(Error::InvalidField("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Self::new(self.grid.clone(), values, self.support_margin.min(other.support_margin))
    }
}

const MAX_INTERP_DIM: usize = 8;

fn interpolate_nd(grid: &GridSpec, values: &[f64], q: &[f64]) -> f64 {
    let d = grid.dim();
    assert!(d <= MAX_INTERP_DIM, "interpolation supports at most {MAX_INTERP_DIM} axes");
    let shape = grid.shape();
    let mut base = [0isize; MAX_INTERP_DIM];
    let mut frac = [0.0; MAX_INTERP_DIM];
    let mut stride = [0usize; MAX_INTERP_DIM];
    let mut s = 1;
    for a in (0..d).rev() {
        stride[a] = s;
        s *= shape[a];
    }
    for a in 0..d {
        let f = q[a].floor();
        base[a] = f as isize;
        frac[a] = q[a] - f;
        if base[a] < -1 || base[a] >= shape[a] as isize {
            return 0.0;
        }
    }
    let mut acc = 0.0;
    'corner: for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0usize;
        for a in 0..d {
            let up = (corner >> a) & 1 == 1;
            let i = base[a] + up as isize;
            if i < 0 || i >= shape[a] as isize {
                continue 'corner;
            }
            w *= if up { frac[a] } else { 1.0 - frac[a] };
            flat += i as usize * stride[a];
        }
        if w != 0.0 {
            acc += w * values[flat];
        }
    }
    acc
}

/// A unit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub const UNIT_TOL: f64 = 1e-12;

    pub fn new(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if v.is_empty() || !n.is_finite() || (n - 1.0).abs() > Self::UNIT_TOL {
            return Err(Error::InvalidDirection(format!("{v:?} is not a unit vector")));
        }
        Ok(Self(v))
    }

    pub fn normalized(v: &[f64]) -> Result<Self> {
        let n = norm(v);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidDirection(format!("cannot normalize {v:?}")));
        }
        Ok(Self(v.iter().map(|x| x / n).collect()))
    }

    pub fn from_angle(theta: f64) -> Self {
        Self(vec![theta.cos(), theta.sin()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        dot(&self.0, x)
    }

    /// Polar angle in `[0, 2pi)`; planar directions only.
    pub fn angle(&self) -> f64 {
        wrap_angle(self.0[1].atan2(self.0[0]))
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|x| -x).collect())
    }

    /// Axis index and sign when the direction is a signed coordinate axis.
    pub fn axis(&self) -> Option<(usize, f64)> {
        let mut found = None;
        for (a, &c) in self.0.iter().enumerate() {
            if (c.abs() - 1.0).abs() <= Self::UNIT_TOL {
                found = Some((a, c.signum()));
            } else if c.abs() > Self::UNIT_TOL {
                return None;
            }
        }
        found
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Angle between two directions after identifying `theta` with `-theta`.
pub fn angle_gap_mod_sign(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

/// Angle between two directions on the full circle.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// `count` equally spaced planar directions starting at (1, 0).
///
/// Multiples of a quarter turn are emitted exactly so that axis orthogonality
/// holds without rounding.
pub fn discretize_directions(count: usize) -> Result<Vec<Direction>> {
    if count < 8 || count % 4 != 0 {
        return Err(Error::InvalidParameter(format!(
            "direction count must be a multiple of 4 and at least 8, got {count}"
        )));
    }
    Ok((0..count)
        .map(|k| {
            if (4 * k) % count == 0 {
                match 4 * k / count {
                    0 => Direction(vec![1.0, 0.0]),
                    1 => Direction(vec![0.0, 1.0]),
                    2 => Direction(vec![-1.0, 0.0]),
                    _ => Direction(vec![0.0, -1.0]),
                }
            } else {
                Direction::from_angle(TAU * k as f64 / count as f64)
            }
        })
        .collect())
}

/// Index of the discretized direction nearest to `theta`.
pub fn nearest_direction_index(theta: f64, count: usize) -> usize {
    let step = TAU / count as f64;
    ((wrap_angle(theta) / step).round() as usize) % count
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceSample {
    pub x: Vec<f64>,
    pub theta: Direction,
    pub decay_order: f64,
    pub log_constant: f64,
    pub singular: bool,
}

/// A discretised wavefront set on a position lattice times a direction set.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefrontSet {
    samples: Vec<PhaseSpaceSample>,
    position_grid: Option<GridSpec>,
    direction_count: usize,
}

impl WavefrontSet {
    pub fn new(samples: Vec<PhaseSpaceSample>, position_grid: Option<GridSpec>, direction_count: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(samples.len());
        for s in &samples {
            let key: Vec<u64> = s.x.iter().chain(s.theta.as_slice()).map(|v| v.to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate sample at x = {:?}, theta = {:?}",
                    s.x,
                    s.theta.as_slice()
                )));
            }
        }
        Ok(Self { samples, position_grid, direction_count })
    }

    pub fn samples(&self) -> &[PhaseSpaceSample] {
        &self.samples
    }

    pub fn singular(&self) -> impl Iterator<Item = &PhaseSpaceSample> {
        self.samples.iter().filter(|s| s.singular)
    }

    pub fn singular_count(&self) -> usize {
        self.singular().count()
    }

    pub fn position_grid(&self) -> Option<&GridSpec> {
        self.position_grid.as_ref()
    }

    pub fn direction_count(&self) -> usize {
        self.direction_count
    }

    pub fn angular_step(&self) -> f64 {
        TAU / self.direction_count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_lower_corner_and_spacing() {
        let g = make_grid(&[(-1.0, 1.0), (0.0, 4.0)], &[4, 8]).unwrap();
        assert_eq!(g.spacing(), &[0.5, 0.5]);
        assert_eq!(g.coordinate(&[0, 0]), vec![-1.0, 0.0]);
        assert_eq!(g.coordinate(&[3, 7]), vec![0.5, 3.5]);
    }

    #[test]
    fn grid_rejects_short_axes() {
        assert!(matches!(make_grid(&[(0.0, 1.0)], &[3]), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn flat_index_round_trip() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[4, 5, 6]).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(&g.unravel(flat)), flat);
        }
        assert_eq!(g.strides(), vec![30, 6, 1]);
    }

    #[test]
    fn margin_is_enforced() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 1.0)], &[8, 8]).unwrap();
        let mut v = vec![0.0; 64];
        v[g.flat_index(&[1, 4])] = 1.0;
        assert!(SampledField::new(g.clone(), v.clone(), 1).is_ok());
        assert!(SampledField::new(g, v, 2).is_err());
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 1.0)], &[8, 8]).unwrap();
        let f = SampledField::from_fn(g.clone(), 0, |x| 1.0 + 2.0 * x[0] - 3.0 * x[1]).unwrap();
        let v = f.interpolate(&[0.3, 0.41]);
        assert!((v - (1.0 + 0.6 - 1.23)).abs() < 1e-12);
        let g3 = make_grid(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[5, 5, 5]).unwrap();
        let f3 = SampledField::from_fn(g3, 0, |x| x[0] + x[1] * 2.0 + x[2] * 4.0).unwrap();
        assert!((f3.interpolate(&[0.3, 0.5, 0.11]) - (0.3 + 1.0 + 0.44)).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_zero_far_outside() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 1.0)], &[8, 8]).unwrap();
        let f = SampledField::from_fn(g, 0, |_| 1.0).unwrap();
        assert_eq!(f.interpolate(&[-0.5, 0.5]), 0.0);
        assert!((f.interpolate_index(&[-0.5, 2.0]) - 0.5).abs() < 1e-15);
        assert_eq!(f.interpolate_index_clamped(&[-3.0, 20.0]), 1.0);
    }

    #[test]
    fn direction_counts_and_axes() {
        let d8 = discretize_directions(8).unwrap();
        assert!(d8.iter().any(|d| d.as_slice() == [1.0, 0.0]));
        assert!(d8.iter().any(|d| d.as_slice() == [0.0, 1.0]));
        let d72 = discretize_directions(72).unwrap();
        for k in 0..72 {
            let gap = angle_gap(d72[k].angle(), d72[(k + 1) % 72].angle());
            assert!((gap - 5f64.to_radians()).abs() < 1e-12);
            assert!((norm(d72[k].as_slice()) - 1.0).abs() < 1e-15);
        }
        assert!(discretize_directions(6).is_err());
    }

    #[test]
    fn direction_validation() {
        assert!(Direction::new(vec![1.0, 1.0]).is_err());
        assert_eq!(Direction::new(vec![0.0, -1.0]).unwrap().axis(), Some((1, -1.0)));
        assert_eq!(Direction::normalized(&[1.0, 1.0]).unwrap().axis(), None);
    }

    #[test]
    fn angle_gaps() {
        use std::f64::consts::PI;
        assert!(angle_gap_mod_sign(0.1, PI + 0.1) < 1e-12);
        assert!((angle_gap(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(nearest_direction_index(TAU - 1e-9, 72), 0);
    }

    #[test]
    fn wavefront_set_rejects_duplicates() {
        let s = PhaseSpaceSample {
            x: vec![0.0, 0.0],
            theta: Direction::from_angle(0.0),
            decay_order: 1.0,
            log_constant: 0.0,
            singular: true,
        };
        assert!(WavefrontSet::new(vec![s.clone(), s], None, 8).is_err());
    }
}
