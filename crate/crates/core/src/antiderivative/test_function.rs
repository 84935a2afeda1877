//! The action of `I_v` on test functions, `I_v phi = J phi - (X_v phi) Psi`.
//!
//! `J phi(u + t v) = integral_{-inf}^t phi(u + s v) ds` and `Psi` is the
//! primitive of a unit-mass bump `psi0`. The result is compactly supported and
//! satisfies `<I_v w, phi> = -<w, I_v phi>` whenever `psi0` sits below the
//! support of `w`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{distance, dot, Direction, SampledField};
use crate::phantoms::bump_profile;
use crate::quadrature::integrate;

/// Values below this magnitude are treated as outside a test function's support.
pub const TEST_CUTOFF: f64 = 1e-14;
pub const QUADRATURE_TOL: f64 = 1e-9;

/// A smooth function together with a ball outside which `|phi| < TEST_CUTOFF`.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    center: Vec<f64>,
    radius: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("center", &self.center).field("radius", &self.radius).finish()
    }
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), center, radius }
    }

    /// `amplitude * exp(-|x - c|^2 / (2 width^2))`.
    pub fn gaussian(center: Vec<f64>, width: f64, amplitude: f64) -> Self {
        let radius = width * (2.0 * (amplitude.abs().max(1.0) / TEST_CUTOFF).ln()).sqrt();
        let c = center.clone();
        Self::new(center, radius, move |x| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            amplitude * (-r2 / (2.0 * width * width)).exp()
        })
    }

    /// Directional derivative along `v` of [`TestFunction::gaussian`].
    pub fn gaussian_derivative(center: Vec<f64>, width: f64, amplitude: f64, v: &Direction) -> Self {
        let radius = width * (2.0 * (amplitude.abs().max(1.0) * 10.0 / (width * TEST_CUTOFF)).ln()).sqrt();
        let c = center.clone();
        let vv = v.as_slice().to_vec();
        Self::new(center, radius, move |x| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            let proj: f64 = x.iter().zip(&c).zip(&vv).map(|((a, b), e)| (a - b) * e).sum();
            -amplitude * proj / (width * width) * (-r2 / (2.0 * width * width)).exp()
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Parameter interval where the line `u + s v` meets the support ball.
    fn chord(&self, u: &[f64], v: &[f64]) -> Option<(f64, f64)> {
        let rel: Vec<f64> = u.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let b = dot(&rel, v);
        let disc = self.radius * self.radius - (dot(&rel, &rel) - b * b);
        if disc <= 0.0 {
            return None;
        }
        let r = disc.sqrt();
        Some((-b - r, -b + r))
    }
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| integrate(bump_profile, -1.0, 1.0, 1e-15, 8).expect("bump mass quadrature"))
}

/// A unit-mass bump on `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Psi0 {
    pub center: f64,
    pub half_width: f64,
}

impl Psi0 {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(center.is_finite() && half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParameter("psi0 needs a finite centre and positive half-width".into()));
        }
        Ok(Self { center, half_width })
    }

    /// The bump ending `gap` below `t_min`, with the given half-width.
    pub fn below(t_min: f64, gap: f64, half_width: f64) -> Result<Self> {
        Self::new(t_min - gap - half_width, half_width)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn eval(&self, t: f64) -> f64 {
        bump_profile((t - self.center) / self.half_width) / (self.half_width * bump_mass())
    }

    /// `Psi(t) = integral_{-inf}^t psi0`.
    pub fn primitive(&self, t: f64) -> Result<f64> {
        let (a, b) = self.support();
        if t <= a {
            return Ok(0.0);
        }
        integrate(|s| self.eval(s), a, t.min(b), 0.1 * QUADRATURE_TOL, 4)
    }
}

#[derive(Debug, Clone)]
pub struct TestFunctionSpec {
    pub phi: TestFunction,
    pub psi0: Psi0,
}

impl TestFunctionSpec {
    /// Gap in cells between the default `psi0` and the field support.
    pub const DEFAULT_GAP_CELLS: f64 = 4.0;

    pub fn new(phi: TestFunction, psi0: Psi0) -> Self {
        Self { phi, psi0 }
    }
}

/// Evaluates `I_v phi` at the given points.
pub fn apply_i_to_test_function(spec: &TestFunctionSpec, v: &Direction, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let vv = v.as_slice();
    if spec.phi.center.len() != vv.len() {
        return Err(Error::InvalidDirection("direction and test function dimensions differ".into()));
    }
    points
        .iter()
        .map(|x| {
            let t = dot(x, vv);
            let u: Vec<f64> = x.iter().zip(vv).map(|(a, b)| a - t * b).collect();
            let Some((lo, hi)) = spec.phi.chord(&u, vv) else {
                return Ok(0.0);
            };
            let line = |s: f64| {
                let p: Vec<f64> = u.iter().zip(vv).map(|(a, b)| a + s * b).collect();
                spec.phi.eval(&p)
            };
            let panels = (((hi - lo) / spec.phi.radius) * 8.0).ceil().max(1.0) as usize;
            let total = integrate(line, lo, hi, QUADRATURE_TOL, panels)?;
            let partial = if t <= lo {
                0.0
            } else if t >= hi {
                total
            } else {
                integrate(line, lo, t, QUADRATURE_TOL, panels)?
            };
            Ok(partial - total * spec.psi0.primitive(t)?)
        })
        .collect()
}

/// Riemann sum `sum_i w_i phi(x_i) * cell volume`.
pub fn dual_pairing(field: &SampledField, phi: &TestFunction) -> f64 {
    let g = field.grid();
    let mut acc = 0.0;
    for (flat, &w) in field.values().iter().enumerate() {
        if w != 0.0 {
            let x = g.coordinate_of_flat(flat);
            if distance(&x, &phi.center) < phi.radius {
                acc += w * phi.eval(&x);
            }
        }
    }
    acc * g.cell_volume()
}
