//! Analytic test distributions with known singular supports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    discretize_directions, distance, dot, nearest_direction_index, norm, wrap_angle, GridSpec,
    PhaseSpaceSample, SampledField, WavefrontSet,
};

/// Cells kept at zero around every rasterized phantom.
pub const PHANTOM_MARGIN: usize = 4;
const SUPERSAMPLE: usize = 4;

/// `exp(1 - 1/(1 - s^2))` on `|s| < 1`, zero elsewhere; equals 1 at the centre.
pub fn bump_profile(s: f64) -> f64 {
    let s2 = s * s;
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomKind {
    Bump { center: Vec<f64>, radius: f64 },
    DiskIndicator { center: Vec<f64>, radius: f64 },
    /// Indicator of `x . normal > offset` multiplied by a smooth bump cutoff
    /// of radius `radius` around `center`, so the result stays compactly
    /// supported and only the boundary line is singular.
    HalfPlaneIndicator { normal: Vec<f64>, offset: f64, center: Vec<f64>, radius: f64 },
    PointDelta { location: Vec<f64> },
    SegmentDelta { start: Vec<f64>, end: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    #[serde(flatten)]
    pub kind: PhantomKind,
    pub amplitude: f64,
    /// Mollifier width in physical units; zero means none.
    #[serde(default)]
    pub sigma: f64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, amplitude: f64, sigma: f64) -> Self {
        Self { kind, amplitude, sigma }
    }

    pub fn bump(center: Vec<f64>, radius: f64, amplitude: f64) -> Self {
        Self::new(PhantomKind::Bump { center, radius }, amplitude, 0.0)
    }

    pub fn disk(center: Vec<f64>, radius: f64, amplitude: f64, sigma: f64) -> Self {
        Self::new(PhantomKind::DiskIndicator { center, radius }, amplitude, sigma)
    }

    pub fn point_delta(location: Vec<f64>, amplitude: f64, sigma: f64) -> Self {
        Self::new(PhantomKind::PointDelta { location }, amplitude, sigma)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !self.amplitude.is_finite() {
            return bad("amplitude must be finite".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        let check_pt = |p: &Vec<f64>, what: &str| -> Result<()> {
            if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{what} must be a finite {dim}-vector")));
            }
            Ok(())
        };
        match &self.kind {
            PhantomKind::Bump { center, radius } | PhantomKind::DiskIndicator { center, radius } => {
                check_pt(center, "center")?;
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
            }
            PhantomKind::HalfPlaneIndicator { normal, offset, center, radius } => {
                check_pt(normal, "normal")?;
                check_pt(center, "center")?;
                if (norm(normal) - 1.0).abs() > 1e-9 {
                    return bad("half-plane normal must be a unit vector".into());
                }
                if !offset.is_finite() || !(*radius > 0.0 && radius.is_finite()) {
                    return bad("half-plane offset and cutoff radius must be finite, radius positive".into());
                }
            }
            PhantomKind::PointDelta { location } => {
                check_pt(location, "location")?;
                if self.sigma <= 0.0 {
                    return bad("point_delta needs sigma > 0".into());
                }
            }
            PhantomKind::SegmentDelta { start, end } => {
                check_pt(start, "start")?;
                check_pt(end, "end")?;
                if distance(start, end) == 0.0 {
                    return bad("segment endpoints coincide".into());
                }
                if self.sigma <= 0.0 {
                    return bad("segment_delta needs sigma > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Bounding box of the (mollified) support.
    pub fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        let pad = 3.0 * self.sigma;
        let ball = |c: &Vec<f64>, r: f64| -> (Vec<f64>, Vec<f64>) {
            (c.iter().map(|v| v - r - pad).collect(), c.iter().map(|v| v + r + pad).collect())
        };
        match &self.kind {
            PhantomKind::Bump { center, radius } | PhantomKind::DiskIndicator { center, radius } => ball(center, *radius),
            PhantomKind::HalfPlaneIndicator { center, radius, .. } => ball(center, *radius),
            PhantomKind::PointDelta { location } => ball(location, 0.0),
            PhantomKind::SegmentDelta { start, end } => (
                start.iter().zip(end).map(|(a, b)| a.min(*b) - pad).collect(),
                start.iter().zip(end).map(|(a, b)| a.max(*b) + pad).collect(),
            ),
        }
    }

    /// Pointwise value of the unmollified function form.
    ///
    /// Deltas have no pointwise values and return an error.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let a = self.amplitude;
        Ok(match &self.kind {
            PhantomKind::Bump { center, radius } => a * bump_profile(distance(x, center) / radius),
            PhantomKind::DiskIndicator { center, radius } => {
                if distance(x, center) < *radius {
                    a
                } else {
                    0.0
                }
            }
            PhantomKind::HalfPlaneIndicator { normal, offset, center, radius } => {
                if dot(x, normal) > *offset {
                    a * bump_profile(distance(x, center) / radius)
                } else {
                    0.0
                }
            }
            _ => return Err(Error::InvalidParameter("deltas have no pointwise values".into())),
        })
    }
}

/// Sampled mollifier on the lattice offsets within `3 sigma`, normalised to unit mass.
struct DiscreteKernel {
    offsets: Vec<Vec<isize>>,
    weights: Vec<f64>,
}

impl DiscreteKernel {
    fn new(grid: &GridSpec, sigma: f64) -> Result<Self> {
        let d = grid.dim();
        let reach: Vec<isize> = grid.spacing().iter().map(|h| (3.0 * sigma / h).ceil() as isize).collect();
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut cur = reach.iter().map(|r| -r).collect::<Vec<_>>();
        loop {
            let r2: f64 = (0..d).map(|a| (cur[a] as f64 * grid.spacing()[a]).powi(2)).sum();
            let w = bump_profile(r2.sqrt() / (3.0 * sigma));
            if w > 0.0 {
                offsets.push(cur.clone());
                weights.push(w);
            }
            let mut a = d;
            loop {
                if a == 0 {
                    let mass: f64 = weights.iter().sum::<f64>() * grid.cell_volume();
                    if mass <= 0.0 {
                        return Err(Error::InvalidParameter(format!("sigma {sigma} too small for the grid")));
                    }
                    weights.iter_mut().for_each(|w| *w /= mass);
                    return Ok(Self { offsets, weights });
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] <= reach[a] {
                    break;
                }
                cur[a] = -reach[a];
            }
        }
    }

    fn convolve(&self, grid: &GridSpec, values: &[f64]) -> Vec<f64> {
        let shape = grid.shape();
        let strides = grid.strides();
        let vol = grid.cell_volume();
        let mut out = vec![0.0; values.len()];
        for (flat, &v) in values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let idx = grid.unravel(flat);
            'k: for (off, w) in self.offsets.iter().zip(&self.weights) {
                let mut tgt = 0usize;
                for a in 0..idx.len() {
                    let i = idx[a] as isize + off[a];
                    if i < 0 || i >= shape[a] as isize {
                        continue 'k;
                    }
                    tgt += i as usize * strides[a];
                }
                out[tgt] += v * w * vol;
            }
        }
        out
    }

    /// Unit-mass kernel centred at an arbitrary point, scattered onto the grid.
    fn deposit(grid: &GridSpec, sigma: f64, p: &[f64], mass: f64, out: &mut [f64]) -> Result<()> {
        let d = grid.dim();
        let q = grid.index_coordinate(p);
        let reach: Vec<isize> = grid.spacing().iter().map(|h| (3.0 * sigma / h).ceil() as isize + 1).collect();
        let base: Vec<isize> = q.iter().map(|v| v.round() as isize).collect();
        let mut cells = Vec::new();
        let mut ws = Vec::new();
        let mut cur: Vec<isize> = reach.iter().map(|r| -r).collect();
        'outer: loop {
            let idx: Vec<isize> = (0..d).map(|a| base[a] + cur[a]).collect();
            let r2: f64 = (0..d).map(|a| ((idx[a] as f64 - q[a]) * grid.spacing()[a]).powi(2)).sum();
            let w = bump_profile(r2.sqrt() / (3.0 * sigma));
            if w > 0.0 {
                if idx.iter().zip(grid.shape()).any(|(&i, &n)| i < 0 || i >= n as isize) {
                    return Err(Error::GeometryOverflow(format!("kernel at {p:?} leaves the grid")));
                }
                cells.push(grid.flat_index(&idx.iter().map(|&i| i as usize).collect::<Vec<_>>()));
                ws.push(w);
            }
            let mut a = d;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] <= reach[a] {
                    break;
                }
                cur[a] = -reach[a];
            }
        }
        let total: f64 = ws.iter().sum::<f64>() * grid.cell_volume();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(format!("sigma {sigma} too small for the grid")));
        }
        for (c, w) in cells.into_iter().zip(ws) {
            out[c] += mass * w / total;
        }
        Ok(())
    }
}

fn check_geometry(spec: &PhantomSpec, grid: &GridSpec) -> Result<()> {
    let (lo, hi) = spec.support_box();
    let h = grid.spacing();
    let (glo, _) = grid.bounds();
    for a in 0..grid.dim() {
        let ilo = ((lo[a] - glo[a]) / h[a]).floor() - 1.0;
        let ihi = ((hi[a] - glo[a]) / h[a]).ceil() + 1.0;
        let last = (grid.shape()[a] - 1) as f64;
        if ilo < PHANTOM_MARGIN as f64 || ihi > last - PHANTOM_MARGIN as f64 {
            return Err(Error::GeometryOverflow(format!(
                "support box [{:?}, {:?}] needs {PHANTOM_MARGIN} clear cells inside the grid",
                lo, hi
            )));
        }
    }
    Ok(())
}

/// Cell average of an indicator by `SUPERSAMPLE^d` midpoint samples.
fn cell_average(grid: &GridSpec, flat: usize, inside: &impl Fn(&[f64]) -> bool) -> f64 {
    let d = grid.dim();
    let c = grid.coordinate_of_flat(flat);
    let n = SUPERSAMPLE.pow(d as u32);
    let mut hits = 0usize;
    let mut x = vec![0.0; d];
    for s in 0..n {
        let mut r = s;
        for a in 0..d {
            let k = r % SUPERSAMPLE;
            r /= SUPERSAMPLE;
            x[a] = c[a] + ((k as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5) * grid.spacing()[a];
        }
        hits += inside(&x) as usize;
    }
    hits as f64 / n as f64
}

pub fn rasterize(spec: &PhantomSpec, grid: &GridSpec) -> Result<SampledField> {
    spec.validate(grid.dim())?;
    check_geometry(spec, grid)?;
    let n = grid.len();
    // geometry is rasterized at unit amplitude and scaled last, keeping amplitude linearity exact
    let a = 1.0;
    let mut values = vec![0.0; n];
    let (blo, bhi) = spec.support_box();
    let in_box = |x: &[f64]| {
        let h = grid.max_spacing();
        x.iter().zip(&blo).zip(&bhi).all(|((v, l), u)| *v >= l - h && *v <= u + h)
    };
    match &spec.kind {
        PhantomKind::Bump { center, radius } => {
            for (flat, v) in values.iter_mut().enumerate() {
                let x = grid.coordinate_of_flat(flat);
                *v = a * bump_profile(distance(&x, center) / radius);
            }
        }
        PhantomKind::DiskIndicator { center, radius } => {
            let inside = |x: &[f64]| distance(x, center) < *radius;
            for (flat, v) in values.iter_mut().enumerate() {
                if in_box(&grid.coordinate_of_flat(flat)) {
                    *v = a * cell_average(grid, flat, &inside);
                }
            }
        }
        PhantomKind::HalfPlaneIndicator { normal, offset, center, radius } => {
            let inside = |x: &[f64]| dot(x, normal) > *offset;
            for (flat, v) in values.iter_mut().enumerate() {
                let x = grid.coordinate_of_flat(flat);
                let cut = bump_profile(distance(&x, center) / radius);
                if cut > 0.0 {
                    *v = a * cut * cell_average(grid, flat, &inside);
                }
            }
        }
        PhantomKind::PointDelta { location } => {
            DiscreteKernel::deposit(grid, spec.sigma, location, a, &mut values)?;
        }
        PhantomKind::SegmentDelta { start, end } => {
            let len = distance(start, end);
            let pieces = ((4.0 * len / grid.min_spacing()).ceil() as usize).max(1);
            for j in 0..pieces {
                let s = (j as f64 + 0.5) / pieces as f64;
                let p: Vec<f64> = start.iter().zip(end).map(|(u, w)| u + s * (w - u)).collect();
                DiscreteKernel::deposit(grid, spec.sigma, &p, a * len / pieces as f64, &mut values)?;
            }
        }
    }
    let needs_conv = spec.sigma > 0.0
        && !matches!(spec.kind, PhantomKind::PointDelta { .. } | PhantomKind::SegmentDelta { .. });
    if needs_conv {
        values = DiscreteKernel::new(grid, spec.sigma)?.convolve(grid, &values);
    }
    let amp = spec.amplitude;
    values.iter_mut().for_each(|v| *v *= amp);
    SampledField::new(grid.clone(), values, PHANTOM_MARGIN)
}

/// Sum of several rasterized phantoms on one grid.
pub fn rasterize_all(specs: &[PhantomSpec], grid: &GridSpec) -> Result<SampledField> {
    let mut acc = vec![0.0; grid.len()];
    for s in specs {
        let f = rasterize(s, grid)?;
        acc.iter_mut().zip(f.values()).for_each(|(a, v)| *a += v);
    }
    SampledField::new(grid.clone(), acc, PHANTOM_MARGIN)
}

/// Reproducible random bumps with centres in `[lo, hi]^2` and radii in `radius`.
pub fn random_bumps(seed: u64, count: usize, lo: f64, hi: f64, radius: (f64, f64)) -> Vec<PhantomSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = vec![rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)];
            let r = rng.gen_range(radius.0..=radius.1);
            let amp = rng.gen_range(0.5..=1.5);
            PhantomSpec::bump(c, r, amp)
        })
        .collect()
}

fn snapped_directions(normal_angle: f64, count: usize) -> [usize; 2] {
    [
        nearest_direction_index(normal_angle, count),
        nearest_direction_index(normal_angle + std::f64::consts::PI, count),
    ]
}

/// Known singular directions of a phantom snapped onto a position lattice.
///
/// A lattice point is kept when it lies within half a lattice diagonal of the
/// singular support; directions are snapped to the nearest discretized one.
pub fn exact_wavefront(spec: &PhantomSpec, direction_count: usize, positions: &GridSpec) -> Result<WavefrontSet> {
    if positions.dim() != 2 {
        return Err(Error::InvalidParameter("exact wavefront sets are planar".into()));
    }
    spec.validate(2)?;
    let dirs = discretize_directions(direction_count)?;
    let snap = 0.5 * norm(positions.spacing());
    let mut samples = Vec::new();
    let mut push = |x: Vec<f64>, k: usize, samples: &mut Vec<PhaseSpaceSample>| {
        samples.push(PhaseSpaceSample {
            x,
            theta: dirs[k].clone(),
            decay_order: 0.0,
            log_constant: 0.0,
            singular: true,
        });
    };
    if spec.amplitude == 0.0 {
        return WavefrontSet::new(samples, Some(positions.clone()), direction_count);
    }
    let nearest_lattice = |p: &[f64]| -> Option<Vec<f64>> {
        let q = positions.index_coordinate(p);
        let idx: Option<Vec<usize>> = q
            .iter()
            .zip(positions.shape())
            .map(|(v, &n)| {
                let r = v.round();
                (r >= 0.0 && r <= (n - 1) as f64).then_some(r as usize)
            })
            .collect();
        idx.map(|i| positions.coordinate(&i))
    };
    let all_dirs = |x: Vec<f64>, samples: &mut Vec<PhaseSpaceSample>, push: &mut dyn FnMut(Vec<f64>, usize, &mut Vec<PhaseSpaceSample>)| {
        for k in 0..direction_count {
            push(x.clone(), k, samples);
        }
    };
    match &spec.kind {
        PhantomKind::Bump { .. } => {}
        PhantomKind::PointDelta { location } => {
            if let Some(x) = nearest_lattice(location) {
                all_dirs(x, &mut samples, &mut push);
            }
        }
        PhantomKind::DiskIndicator { center, radius } => {
            for flat in 0..positions.len() {
                let x = positions.coordinate_of_flat(flat);
                let r = distance(&x, center);
                if (r - radius).abs() <= snap && r > 0.0 {
                    let ang = (x[1] - center[1]).atan2(x[0] - center[0]);
                    for k in snapped_directions(ang, direction_count) {
                        push(x.clone(), k, &mut samples);
                    }
                }
            }
        }
        PhantomKind::HalfPlaneIndicator { normal, offset, center, radius } => {
            let ang = wrap_angle(normal[1].atan2(normal[0]));
            for flat in 0..positions.len() {
                let x = positions.coordinate_of_flat(flat);
                let s = dot(&x, normal) - offset;
                if s.abs() > snap {
                    continue;
                }
                let foot: Vec<f64> = x.iter().zip(normal).map(|(xi, ni)| xi - s * ni).collect();
                if distance(&foot, center) < *radius {
                    for k in snapped_directions(ang, direction_count) {
                        push(x.clone(), k, &mut samples);
                    }
                }
            }
        }
        PhantomKind::SegmentDelta { start, end } => {
            let d: Vec<f64> = end.iter().zip(start).map(|(e, s)| e - s).collect();
            let len = norm(&d);
            let ang = wrap_angle(d[0].atan2(-d[1]));
            let ends = [nearest_lattice(start), nearest_lattice(end)];
            for flat in 0..positions.len() {
                let x = positions.coordinate_of_flat(flat);
                if ends.iter().flatten().any(|e| e == &x) {
                    continue;
                }
                let rel: Vec<f64> = x.iter().zip(start).map(|(a, b)| a - b).collect();
                let s = dot(&rel, &d) / (len * len);
                if !(0.0..=1.0).contains(&s) {
                    continue;
                }
                let across = (rel[0] * d[1] - rel[1] * d[0]).abs() / len;
                if across <= snap {
                    for k in snapped_directions(ang, direction_count) {
                        push(x.clone(), k, &mut samples);
                    }
                }
            }
            let mut seen: Vec<Vec<f64>> = Vec::new();
            for e in ends.into_iter().flatten() {
                if !seen.contains(&e) {
                    seen.push(e.clone());
                    all_dirs(e, &mut samples, &mut push);
                }
            }
        }
    }
    WavefrontSet::new(samples, Some(positions.clone()), direction_count)
}
