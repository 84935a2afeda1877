//! Numerical wavefront-set estimation from windowed local spectra.
//!
//! At each position the field is multiplied by a smooth window, transformed,
//! and for each direction the largest spectral magnitude in a narrow cone is
//! recorded on a few dyadic frequency annuli. Fitting
//! `ln m = ln C - (N/2) ln(1 + r^2)` gives a decay order `N`; directions with
//! `N` below the threshold are flagged singular.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::fft::{signed_bin, Planner};
use crate::grid::{discretize_directions, dot, Direction, GridSpec, PhaseSpaceSample, SampledField, WavefrontSet};
use crate::phantoms::bump_profile;

/// Decay order reported when the spectrum falls to the noise floor inside the band.
pub const RAPID_DECAY_ORDER: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorParams {
    /// Window radius in cells of the finest axis.
    pub window_radius_cells: usize,
    /// Exponent `p` of the window profile `bump(r / R)^p`.
    pub window_sharpness: f64,
    /// Cone half-width as the tangent of the half-angle.
    pub cone_half_width: f64,
    pub dirs: usize,
    pub threshold_order: f64,
    pub stride_cells: usize,
    /// Inner radius of the first annulus in spectral lattice steps.
    pub r_min_cells: f64,
    /// Outer radius of the band as a fraction of the Nyquist frequency.
    pub r_max_fraction: f64,
    /// Zero-padding factor of the windowed patch.
    pub padding: usize,
    /// Spectral magnitudes below this fraction of `max|w| * window mass` are noise.
    pub noise_floor: f64,
    /// Per position, high-frequency maxima below this fraction of the strongest
    /// direction's are also treated as noise.
    pub dominance: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            window_radius_cells: 32,
            window_sharpness: 4.0,
            cone_half_width: 0.1,
            dirs: 72,
            threshold_order: 2.5,
            stride_cells: 8,
            r_min_cells: 4.0,
            r_max_fraction: 1.0,
            padding: 2,
            noise_floor: 1e-5,
            dominance: 0.5,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.window_radius_cells < 4 {
            return bad("window radius must be at least 4 cells");
        }
        if !(self.window_sharpness > 0.0 && self.window_sharpness.is_finite()) {
            return bad("window sharpness must be positive");
        }
        if !(self.cone_half_width > 0.0 && self.cone_half_width < 1.0) {
            return bad("cone half-width must lie in (0, 1)");
        }
        if self.stride_cells == 0 || self.padding == 0 {
            return bad("stride and padding must be positive");
        }
        if !(self.r_min_cells > 0.0 && self.r_max_fraction > 0.0 && self.r_max_fraction <= 1.0) {
            return bad("frequency band must satisfy 0 < r_min and 0 < r_max_fraction <= 1");
        }
        if !(self.dominance >= 0.0 && self.dominance < 1.0) {
            return bad("dominance must lie in [0, 1)");
        }
        if !(self.noise_floor >= 0.0 && self.threshold_order.is_finite()) {
            return bad("noise floor must be non-negative and the threshold finite");
        }
        discretize_directions(self.dirs).map(|_| ())
    }
}

/// Radial window `bump(|x - x0| / radius)^sharpness`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub radius: f64,
    pub sharpness: f64,
}

impl WindowSpec {
    pub fn eval(&self, r: f64) -> f64 {
        let b = bump_profile(r / self.radius);
        if b == 0.0 {
            0.0
        } else {
            b.powf(self.sharpness)
        }
    }
}

/// `S(xi) = h^n sum_j w(x_j) chi(x_j - x0) e^{-i xi . (x_j - x0)}` on the padded
/// frequency lattice.
#[derive(Debug, Clone)]
pub struct LocalSpectrum {
    pub shape: Vec<usize>,
    pub freq_step: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl LocalSpectrum {
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let d = self.shape.len();
        let mut idx = vec![0; d];
        let mut r = flat;
        for a in (0..d).rev() {
            idx[a] = r % self.shape[a];
            r /= self.shape[a];
        }
        (0..d).map(|a| signed_bin(idx[a], self.shape[a]) as f64 * self.freq_step[a]).collect()
    }

    /// Smallest Nyquist frequency over the axes.
    pub fn nyquist(&self) -> f64 {
        self.shape
            .iter()
            .zip(&self.freq_step)
            .map(|(&n, &s)| (n / 2) as f64 * s)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Index range of cells strictly inside the window along one axis.
fn window_range(x0: f64, radius: f64, origin: f64, h: f64) -> (i64, i64) {
    let snap = |a: f64| if (a - a.round()).abs() < 1e-9 { a.round() } else { a };
    let lo = snap((x0 - radius - origin) / h).floor() as i64 + 1;
    let hi = snap((x0 + radius - origin) / h).ceil() as i64 - 1;
    (lo, hi)
}

struct Patch {
    lo: Vec<i64>,
    len: Vec<usize>,
    values: Vec<f64>,
}

fn windowed_patch(field: &SampledField, x0: &[f64], window: &WindowSpec) -> Result<Patch> {
    let g = field.grid();
    let d = g.dim();
    let mut lo = Vec::with_capacity(d);
    let mut len = Vec::with_capacity(d);
    for a in 0..d {
        let (l, h) = window_range(x0[a], window.radius, g.origin()[a], g.spacing()[a]);
        if l < 0 || h >= g.shape()[a] as i64 || h < l {
            return Err(Error::WindowClipped(x0.to_vec()));
        }
        lo.push(l);
        len.push((h - l + 1) as usize);
    }
    let total: usize = len.iter().product();
    let mut values = vec![0.0; total];
    let mut idx = vec![0usize; d];
    for (p, v) in values.iter_mut().enumerate() {
        let mut r = p;
        for a in (0..d).rev() {
            idx[a] = lo[a] as usize + r % len[a];
            r /= len[a];
        }
        let x = g.coordinate(&idx);
        let dist = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let w = window.eval(dist);
        if w != 0.0 {
            *v = w * field.get(&idx);
        }
    }
    Ok(Patch { lo, len, values })
}

fn patch_spectrum(
    field: &SampledField,
    x0: &[f64],
    patch: &Patch,
    padding: usize,
    planner: &mut Planner,
) -> LocalSpectrum {
    let g = field.grid();
    let d = g.dim();
    let shape: Vec<usize> = patch.len.iter().map(|&l| (padding * l).next_power_of_two()).collect();
    let total: usize = shape.iter().product();
    let mut buf = vec![Complex64::default(); total];
    let mut r_idx = vec![0usize; d];
    for (p, &v) in patch.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let mut r = p;
        for a in (0..d).rev() {
            r_idx[a] = r % patch.len[a];
            r /= patch.len[a];
        }
        let flat = r_idx.iter().zip(&shape).fold(0, |acc, (&i, &n)| acc * n + i);
        buf[flat] = Complex64::new(v, 0.0);
    }
    planner.transform(&mut buf, &shape, false);
    let freq_step: Vec<f64> = (0..d).map(|a| TAU / (shape[a] as f64 * g.spacing()[a])).collect();
    // phase reference: first patch cell relative to x0
    let first: Vec<f64> = (0..d).map(|a| g.axis_coordinate(a, patch.lo[a] as usize) - x0[a]).collect();
    let vol = g.cell_volume();
    let mut idx = vec![0usize; d];
    for (flat, c) in buf.iter_mut().enumerate() {
        let mut r = flat;
        for a in (0..d).rev() {
            idx[a] = r % shape[a];
            r /= shape[a];
        }
        let phase: f64 = (0..d).map(|a| signed_bin(idx[a], shape[a]) as f64 * freq_step[a] * first[a]).sum();
        *c = *c * Complex64::from_polar(vol, -phase);
    }
    LocalSpectrum { shape, freq_step, values: buf }
}

/// Windowed, zero-padded local Fourier transform at `x0` (padding factor 2).
pub fn local_spectrum(field: &SampledField, x0: &[f64], window: &WindowSpec) -> Result<LocalSpectrum> {
    if x0.len() != field.grid().dim() {
        return Err(Error::InvalidParameter("position dimension differs from the field".into()));
    }
    if window.radius < 4.0 * field.grid().max_spacing() {
        return Err(Error::InvalidParameter("window radius must span at least 4 cells".into()));
    }
    let patch = windowed_patch(field, x0, window)?;
    Ok(patch_spectrum(field, x0, &patch, 2, &mut Planner::default()))
}

/// Frequencies `xi` with `xi . eta0 > 0` and transverse part below `half_width * (xi . eta0)`.
///
/// With `axis_v` set the transverse part is split into the `v` component and
/// the rest, each bounded separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub eta0: Direction,
    pub half_width: f64,
    pub axis_v: Option<Direction>,
}

pub fn build_cone(eta0: Direction, half_width: f64, axis_v: Option<Direction>) -> Result<ConeSpec> {
    if !(half_width > 0.0 && half_width < 1.0) {
        return Err(Error::InvalidParameter(format!("cone half-width {half_width} outside (0, 1)")));
    }
    if let Some(v) = &axis_v {
        if v.dim() != eta0.dim() || eta0.dot(v.as_slice()).abs() > 1e-9 {
            return Err(Error::InvalidParameter("cone axis v must be orthogonal to eta0".into()));
        }
    }
    Ok(ConeSpec { eta0, half_width, axis_v })
}

impl ConeSpec {
    pub fn contains(&self, xi: &[f64]) -> bool {
        let e = self.eta0.as_slice();
        let sigma = dot(xi, e);
        if sigma <= 0.0 {
            return false;
        }
        let lim = self.half_width * sigma;
        match &self.axis_v {
            None => {
                let perp2: f64 = xi.iter().zip(e).map(|(x, c)| (x - sigma * c).powi(2)).sum();
                perp2 < lim * lim
            }
            Some(v) => {
                let tau = v.dot(xi);
                let rest2: f64 = xi
                    .iter()
                    .zip(e)
                    .zip(v.as_slice())
                    .map(|((x, c), w)| (x - sigma * c - tau * w).powi(2))
                    .sum();
                tau.abs() < lim && rest2 < lim * lim
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub order: f64,
    pub log_constant: f64,
    pub residual: f64,
    /// `(r, max |S|)` per annulus, innermost first.
    pub annuli: Vec<(f64, f64)>,
    /// True when the magnitudes hit the noise floor and `order` is the sentinel.
    pub rapid: bool,
}

/// Dyadic annuli `[r_min 2^k, r_min 2^(k+1))` that fit below `r_max`.
fn annuli(r_min: f64, r_max: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = r_min;
    while 2.0 * lo <= r_max * (1.0 + 1e-12) {
        out.push((lo, 2.0 * lo));
        lo *= 2.0;
    }
    out
}

fn fit_maxima(maxima: Vec<(f64, f64)>, floor: f64) -> DecayFit {
    let n = maxima.len();
    if floor > 0.0 && (maxima[0].1 <= floor || maxima[n - 1].1 <= floor) {
        return DecayFit {
            order: RAPID_DECAY_ORDER,
            log_constant: floor.ln(),
            residual: 0.0,
            annuli: maxima,
            rapid: true,
        };
    }
    let tiny = f64::MIN_POSITIVE;
    let pts: Vec<(f64, f64)> =
        maxima.iter().map(|&(r, m)| ((1.0 + r * r).ln(), m.max(floor).max(tiny).ln())).collect();
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / nf).sqrt();
    DecayFit { order: -2.0 * slope, log_constant: intercept, residual, annuli: maxima, rapid: false }
}

/// Fits the cone-restricted decay order of a local spectrum.
///
/// Needs at least four dyadic annuli between `r_min` and `r_max`.
pub fn cone_decay_fit(spectrum: &LocalSpectrum, cone: &ConeSpec, r_min: f64, r_max: f64) -> Result<DecayFit> {
    let rings = annuli(r_min, r_max);
    if rings.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "band [{r_min}, {r_max}] holds {} dyadic annuli, need 4",
            rings.len()
        )));
    }
    let mut best = vec![(0.0, -1.0); rings.len()];
    for (flat, c) in spectrum.values.iter().enumerate() {
        let xi = spectrum.frequency(flat);
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let Some(k) = rings.iter().position(|&(lo, hi)| r >= lo && r < hi) else { continue };
        if cone.contains(&xi) && c.norm() > best[k].1 {
            best[k] = (r, c.norm());
        }
    }
    if let Some(k) = best.iter().position(|b| b.1 < 0.0) {
        return Err(Error::EmptyCone(format!("annulus {:?} has no lattice frequency in the cone", rings[k])));
    }
    Ok(fit_maxima(best, 0.0))
}

/// Positions on multiples of the stride whose window stays inside the grid.
pub fn position_lattice(grid: &GridSpec, params: &EstimatorParams) -> Result<GridSpec> {
    let h = grid.min_spacing();
    let radius = params.window_radius_cells as f64 * h;
    let mut shape = Vec::new();
    let mut origin = Vec::new();
    let mut spacing = Vec::new();
    for a in 0..grid.dim() {
        let m = (radius / grid.spacing()[a]).round() as usize;
        let s = params.stride_cells;
        let first = (m.saturating_sub(1)).div_ceil(s) * s;
        let last_cell = grid.shape()[a].saturating_sub(m);
        if last_cell < first {
            return Err(Error::InvalidParameter("grid too small for the estimator window".into()));
        }
        let count = (last_cell - first) / s + 1;
        shape.push(count);
        origin.push(grid.axis_coordinate(a, first));
        spacing.push(s as f64 * grid.spacing()[a]);
    }
    GridSpec::new(shape, spacing, origin)
        .map_err(|_| Error::InvalidParameter("fewer than 4 estimator positions per axis".into()))
}

/// Cone members of each half-circle direction, bucketed by annulus.
struct Membership {
    lists: Vec<Vec<Vec<u32>>>,
    radius: Vec<f64>,
}

impl Membership {
    fn new(shape: &[usize], step: &[f64], dirs: &[Direction], rings: &[(f64, f64)], half_width: f64) -> Result<Self> {
        let total: usize = shape.iter().product();
        let mut radius = vec![0.0; total];
        let mut ring_of = vec![usize::MAX; total];
        let mut xis = vec![[0.0; 2]; total];
        for flat in 0..total {
            let (i, j) = (flat / shape[1], flat % shape[1]);
            let xi = [signed_bin(i, shape[0]) as f64 * step[0], signed_bin(j, shape[1]) as f64 * step[1]];
            let r = xi[0].hypot(xi[1]);
            radius[flat] = r;
            xis[flat] = xi;
            if let Some(k) = rings.iter().position(|&(lo, hi)| r >= lo && r < hi) {
                ring_of[flat] = k;
            }
        }
        let mut lists = Vec::with_capacity(dirs.len() / 2);
        for d in &dirs[..dirs.len() / 2] {
            let cone = build_cone(d.clone(), half_width, None)?;
            let mut per = vec![Vec::new(); rings.len()];
            for flat in 0..total {
                if ring_of[flat] != usize::MAX && cone.contains(&xis[flat]) {
                    per[ring_of[flat]].push(flat as u32);
                }
            }
            if let Some(k) = per.iter().position(|l| l.is_empty()) {
                return Err(Error::EmptyCone(format!(
                    "direction {:.4} rad has no frequencies in annulus {:?}",
                    d.angle(),
                    rings[k]
                )));
            }
            lists.push(per);
        }
        Ok(Self { lists, radius })
    }
}

/// Estimates the wavefront set of a planar field on the stride lattice.
///
/// Every (position, direction) pair is returned with its fit; `singular`
/// marks orders below `threshold_order`. Opposite directions receive
/// identical fits.
pub fn estimate_wavefront(field: &SampledField, params: &EstimatorParams) -> Result<WavefrontSet> {
    params.validate()?;
    let g = field.grid();
    if g.dim() != 2 {
        return Err(Error::InvalidParameter("wavefront estimation is implemented for planar fields".into()));
    }
    let positions = position_lattice(g, params)?;
    let dirs = discretize_directions(params.dirs)?;
    let window = WindowSpec {
        radius: params.window_radius_cells as f64 * g.min_spacing(),
        sharpness: params.window_sharpness,
    };

    // every lattice position has the same patch shape, so the cone lists are shared
    let probe = windowed_patch(field, &positions.coordinate(&[0, 0]), &window)?;
    let shape: Vec<usize> = probe.len.iter().map(|&l| (params.padding * l).next_power_of_two()).collect();
    let step: Vec<f64> = (0..2).map(|a| TAU / (shape[a] as f64 * g.spacing()[a])).collect();
    let nyquist = (0..2).map(|a| (shape[a] / 2) as f64 * step[a]).fold(f64::INFINITY, f64::min);
    let r_min = params.r_min_cells * step[0].max(step[1]);
    let rings = annuli(r_min, params.r_max_fraction * nyquist);
    if rings.len() < 4 {
        return Err(Error::InvalidParameter(format!("only {} dyadic annuli fit in the band", rings.len())));
    }
    let members = Membership::new(&shape, &step, &dirs, &rings, params.cone_half_width)?;
    let window_mass: f64 = probe
        .values
        .iter()
        .enumerate()
        .map(|(p, _)| {
            let (i, j) = (p / probe.len[1], p % probe.len[1]);
            let x0 = positions.coordinate(&[0, 0]);
            let x = g.coordinate(&[probe.lo[0] as usize + i, probe.lo[1] as usize + j]);
            window.eval((x[0] - x0[0]).hypot(x[1] - x0[1]))
        })
        .sum::<f64>()
        * g.cell_volume();
    let floor = params.noise_floor * field.max_abs() * window_mass;
    let half = params.dirs / 2;

    let per_position: Vec<Result<Vec<DecayFit>>> = (0..positions.len())
        .into_par_iter()
        .map_init(Planner::default, |planner, p| {
            let x0 = positions.coordinate_of_flat(p);
            let patch = windowed_patch(field, &x0, &window)?;
            if patch.values.iter().all(|&v| v == 0.0) {
                let maxima = rings.iter().map(|r| (r.0, 0.0)).collect::<Vec<_>>();
                return Ok(vec![fit_maxima(maxima, floor.max(f64::MIN_POSITIVE)); half]);
            }
            let spec = patch_spectrum(field, &x0, &patch, params.padding, planner);
            let n: Vec<f64> = spec.values.iter().map(|c| c.norm()).collect();
            let (s0, s1) = (shape[0], shape[1]);
            let mag = |flat: usize| {
                let (i, j) = (flat / s1, flat % s1);
                let neg = ((s0 - i) % s0) * s1 + (s1 - j) % s1;
                0.5 * (n[flat] + n[neg])
            };
            let maxima: Vec<Vec<(f64, f64)>> = members
                .lists
                .iter()
                .map(|per| {
                    per.iter()
                        .map(|list| {
                            let mut best = (0.0, -1.0);
                            for &f in list {
                                let m = mag(f as usize);
                                if m > best.1 {
                                    best = (members.radius[f as usize], m);
                                }
                            }
                            best
                        })
                        .collect()
                })
                .collect();
            // leakage from a strong direction through the window is noise for the others
            let top = maxima.iter().map(|m| m[m.len() - 1].1).fold(0.0, f64::max);
            let local = floor.max(params.dominance * top);
            Ok(maxima.into_iter().map(|m| fit_maxima(m, local)).collect())
        })
        .collect();

    let mut samples = Vec::with_capacity(positions.len() * params.dirs);
    for (p, fits) in per_position.into_iter().enumerate() {
        let fits = fits?;
        let x = positions.coordinate_of_flat(p);
        for (k, dir) in dirs.iter().enumerate() {
            let fit = &fits[k % half];
            samples.push(PhaseSpaceSample {
                x: x.clone(),
                theta: dir.clone(),
                decay_order: fit.order,
                log_constant: fit.log_constant,
                singular: !fit.rapid && fit.order < params.threshold_order,
            });
        }
    }
    WavefrontSet::new(samples, Some(positions), params.dirs)
}
