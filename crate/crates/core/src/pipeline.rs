//! End-to-end experiments: phantom, operator, estimation, prediction and checks.
//!
//! A run writes its artifacts into the configured output directory:
//!
//! | file | contents |
//! |------|----------|
//! | `input.mlf`, `output.mlf` | fields |
//! | `wf_input.csv`, `wf_output.csv` | estimated wavefront sets |
//! | `predicted.json` | predicted superset |
//! | `containment.json` | predicted set with the containment result |
//! | `microlocal.json`, `tube.json`, `direction_filter.json` | optional checks |
//! | `scanline.csv` | decay orders along one row of estimator positions |
//! | `report.json` | summary of all checks |
//!
//! A failing stage leaves the artifacts written so far plus a `FAILED` file
//! naming the stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::antiderivative::{cumulative_antiderivative, spectral_antiderivative, SupportBound};
use crate::error::{Error, Result};
use crate::grid::{angle_gap_mod_sign, make_grid, Direction, GridSpec, SampledField, WavefrontSet};
use crate::io::{save_wavefront_csv, write_field};
use crate::line_convolution::{
    convolve_pullback, convolve_quadrature, validate_support_bounded, Curve, SupportHorizon, Weight,
    DEFAULT_MEMORY_BUDGET,
};
use crate::phantoms::{random_bumps, rasterize, PhantomSpec, PHANTOM_MARGIN};
use crate::propagation::{
    check_containment, microlocal_bound_check, predict_curve, ContainmentReport, MicrolocalBoundReport, PredictOptions,
    PredictedSet, TubeReport, TubeSpec,
};
use crate::wavefront::{estimate_wavefront, EstimatorParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extent: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiderivMethod {
    #[default]
    Cumulative,
    Spectral,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolveMethod {
    #[default]
    Quadrature,
    Pullback,
}

fn default_weight() -> Weight {
    Weight::Unit
}

fn default_y_resolution() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Antideriv {
        v: Direction,
        #[serde(default)]
        method: AntiderivMethod,
    },
    Convolve {
        curve: Curve,
        #[serde(default = "default_weight")]
        weight: Weight,
        #[serde(default)]
        method: ConvolveMethod,
        /// Asserted support horizon; scanned when absent.
        #[serde(default)]
        horizon: Option<f64>,
        /// Longest curve time the horizon scan probes; defaults to 64 over the slowest speed bound.
        #[serde(default)]
        t_probe_max: Option<f64>,
        #[serde(default = "default_y_resolution")]
        y_resolution: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeConfig {
    pub boxes: Vec<(Vec<f64>, Vec<f64>)>,
    pub t1: f64,
    pub eta0: Direction,
    /// Inflation of the hypothesis sets; defaults to one estimator stride.
    #[serde(default)]
    pub tol_space: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Spatial tolerance; defaults to twice the window radius.
    pub tol_space: Option<f64>,
    /// Angular tolerance in radians; defaults to two direction steps.
    pub tol_angle: Option<f64>,
    pub containment: bool,
    pub microlocal: bool,
    pub tube: Option<TubeConfig>,
    /// Direction that must stay absent from the output when absent from the input.
    pub direction_filter: Option<Direction>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { tol_space: None, tol_angle: None, containment: true, microlocal: true, tube: None, direction_filter: None }
    }
}

/// Smooth random bumps added to the phantom, drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBumps {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
    pub radius: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub random_bumps: Option<RandomBumps>,
    pub operator: OperatorConfig,
    #[serde(default)]
    pub estimator: EstimatorParams,
    #[serde(default)]
    pub check: CheckConfig,
    /// Row of estimator positions whose decay orders go to `scanline.csv`.
    #[serde(default)]
    pub scanline_y: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        self.phantom.validate(grid.dim())?;
        self.estimator.validate()?;
        let dim_err = || Error::InvalidConfig("operator dimension differs from the grid".into());
        match &self.operator {
            OperatorConfig::Antideriv { v, .. } => {
                if v.dim() != grid.dim() {
                    return Err(dim_err());
                }
            }
            OperatorConfig::Convolve { curve, horizon, y_resolution, .. } => {
                curve.validate()?;
                if curve.dim() != grid.dim() {
                    return Err(dim_err());
                }
                if let Some(t) = horizon {
                    SupportHorizon::asserted(*t)?;
                }
                if *y_resolution < 8 {
                    return Err(Error::InvalidConfig("y_resolution must be at least 8".into()));
                }
            }
        }
        if let Some(t) = &self.check.tube {
            TubeSpec::new(t.boxes.clone(), self.operator_direction().ok_or_else(|| {
                Error::InvalidConfig("tube checks need an antiderivative or ray operator".into())
            })?, t.t1)?;
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        make_grid(&self.grid.extent, &self.grid.resolution)
    }

    /// The antiderivative direction, or the unit direction of a ray curve.
    pub fn operator_direction(&self) -> Option<Direction> {
        match &self.operator {
            OperatorConfig::Antideriv { v, .. } => Some(v.clone()),
            OperatorConfig::Convolve { curve: Curve::Ray { v }, .. } => Direction::normalized(v).ok(),
            OperatorConfig::Convolve { .. } => None,
        }
    }

    fn curve(&self) -> Curve {
        match &self.operator {
            OperatorConfig::Antideriv { v, .. } => Curve::Ray { v: v.as_slice().to_vec() },
            OperatorConfig::Convolve { curve, .. } => curve.clone(),
        }
    }
}

/// A stage failure, carrying the stage name.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {error}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionFilterReport {
    pub eta0_rad: f64,
    pub input_matches: usize,
    pub output_matches: usize,
    pub vacuous: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub passed: bool,
    pub seed: u64,
    pub support_horizon: Option<SupportHorizon>,
    pub predict_horizon: f64,
    pub input_singular: usize,
    pub output_singular: usize,
    pub checks: Vec<CheckOutcome>,
}

/// Everything a run produced, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub input: SampledField,
    pub output: SampledField,
    pub wf_input: WavefrontSet,
    pub wf_output: WavefrontSet,
    pub predicted: PredictedSet,
    pub containment: Option<ContainmentReport>,
    pub microlocal: Option<MicrolocalBoundReport>,
    pub tube: Option<TubeReport>,
    pub direction_filter: Option<DirectionFilterReport>,
    pub output_dir: PathBuf,
}

#[derive(Serialize)]
struct ContainmentArtifact<'a> {
    #[serde(flatten)]
    predicted: &'a PredictedSet,
    #[serde(flatten)]
    report: &'a ContainmentReport,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

struct Runner {
    dir: PathBuf,
}

impl Runner {
    fn stage<T>(&self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, PipelineError> {
        f().map_err(|error| {
            let _ = fs::write(self.dir.join("FAILED"), format!("{stage}: {error}\n"));
            PipelineError { stage, error }
        })
    }
}

/// Runs the configured experiment, writing artifacts under `config.output_dir`.
pub fn run_pipeline(config: &ExperimentConfig) -> std::result::Result<PipelineOutcome, PipelineError> {
    run_pipeline_in(config, &config.output_dir)
}

/// Runs the experiment with artifacts written to `dir` instead of the configured directory.
pub fn run_pipeline_in(config: &ExperimentConfig, dir: &Path) -> std::result::Result<PipelineOutcome, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError { stage: "setup", error: e.into() })?;
    let _ = fs::remove_file(dir.join("FAILED"));
    let run = Runner { dir: dir.to_path_buf() };
    run.stage("validate", || config.validate())?;
    let grid = run.stage("validate", || config.grid_spec())?;

    let input = run.stage("phantom", || {
        let mut field = rasterize(&config.phantom, &grid)?;
        if let Some(rb) = &config.random_bumps {
            for spec in random_bumps(config.seed, rb.count, rb.lo, rb.hi, rb.radius) {
                field = field.axpy(1.0, &rasterize(&spec, &grid)?)?;
            }
            field = SampledField::new(grid.clone(), field.into_values(), PHANTOM_MARGIN)?;
        }
        write_field(dir.join("input.mlf"), &field)?;
        Ok(field)
    })?;
    let empty = input.values().iter().all(|&v| v == 0.0);

    let curve = config.curve();
    let support_horizon = run.stage("validate_support_bounded", || -> Result<Option<SupportHorizon>> {
        if empty {
            return Ok(None);
        }
        let asserted = match &config.operator {
            OperatorConfig::Convolve { horizon: Some(t), .. } => Some(SupportHorizon::asserted(*t)?),
            _ => None,
        };
        if let Some(h) = asserted {
            return Ok(Some(h));
        }
        let probe = match &config.operator {
            OperatorConfig::Convolve { t_probe_max: Some(t), .. } => *t,
            _ => {
                let (lo, hi) = grid.bounds();
                let diag = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
                64.0 * diag / curve.max_speed(0.0, 0.0).max(1e-12)
            }
        };
        validate_support_bounded(&curve, &input, &grid, probe).map(Some)
    })?;

    let output = run.stage("operator", || {
        let out = match (&config.operator, support_horizon) {
            (_, None) => SampledField::zeros(grid.clone(), 0),
            (OperatorConfig::Antideriv { v, method: AntiderivMethod::Cumulative }, _) => {
                cumulative_antiderivative(&input, v, &grid)?
            }
            (OperatorConfig::Antideriv { v, method: AntiderivMethod::Spectral }, _) => {
                let bound = SupportBound::for_field(&input, v)?;
                spectral_antiderivative(&input, v, &bound)?
            }
            (OperatorConfig::Convolve { weight, method: ConvolveMethod::Quadrature, .. }, Some(h)) => {
                convolve_quadrature(&input, &curve, weight, &h, &grid)?
            }
            (OperatorConfig::Convolve { weight, method: ConvolveMethod::Pullback, y_resolution, .. }, Some(h)) => {
                convolve_pullback(&input, &curve, weight, &h, *y_resolution, DEFAULT_MEMORY_BUDGET)?
            }
        };
        write_field(dir.join("output.mlf"), &out)?;
        Ok(out)
    })?;

    let (wf_input, wf_output) = run.stage("estimate", || {
        let wi = estimate_wavefront(&input, &config.estimator)?;
        let wo = estimate_wavefront(&output, &config.estimator)?;
        save_wavefront_csv(dir.join("wf_input.csv"), &wi)?;
        save_wavefront_csv(dir.join("wf_output.csv"), &wo)?;
        Ok((wi, wo))
    })?;

    let window_radius = config.estimator.window_radius_cells as f64 * grid.min_spacing();
    let tol_space = config.check.tol_space.unwrap_or(2.0 * window_radius);
    let tol_angle = config.check.tol_angle.unwrap_or(2.0 * wf_input.angular_step());

    let predict_horizon = {
        let t = support_horizon.map_or(0.0, |h| h.t);
        let speed = curve.max_speed(0.0, t).max(1e-12);
        t + window_radius / speed
    };
    let predicted = run.stage("predict", || {
        let p = predict_curve(&wf_input, &curve, predict_horizon, &PredictOptions::default())?;
        write_json(&dir.join("predicted.json"), &p)?;
        Ok(p)
    })?;

    let mut checks = Vec::new();
    let containment = run.stage("check_containment", || {
        if !config.check.containment {
            return Ok(None);
        }
        let r = check_containment(&wf_output, &predicted, tol_space, tol_angle)?;
        write_json(&dir.join("containment.json"), &ContainmentArtifact { predicted: &predicted, report: &r })?;
        checks.push(CheckOutcome {
            name: "containment".into(),
            passed: r.passed(),
            detail: format!("{} of {} singular samples contained", r.contained, r.checked),
        });
        Ok(Some(r))
    })?;

    let direction = config.operator_direction();
    let microlocal = run.stage("microlocal_bound_check", || {
        let Some(v) = direction.as_ref().filter(|_| config.check.microlocal) else { return Ok(None) };
        let r = microlocal_bound_check(&wf_output, &wf_input, v, tol_space, tol_angle)?;
        write_json(&dir.join("microlocal.json"), &r)?;
        checks.push(CheckOutcome {
            name: "microlocal".into(),
            passed: r.passed(),
            detail: format!("{} violations among {} singular samples", r.violations.len(), r.checked),
        });
        Ok(Some(r))
    })?;

    let tube = run.stage("tube_extension_check", || {
        let (Some(t), Some(v)) = (&config.check.tube, direction.as_ref()) else { return Ok(None) };
        let spec = TubeSpec::new(t.boxes.clone(), v.clone(), t.t1)?;
        let inflate = t.tol_space.unwrap_or(config.estimator.stride_cells as f64 * grid.min_spacing());
        let r = crate::propagation::tube_extension_check(&wf_output, &wf_input, &spec, &t.eta0, inflate, tol_angle)?;
        write_json(&dir.join("tube.json"), &r)?;
        checks.push(CheckOutcome {
            name: "tube".into(),
            passed: r.holds,
            detail: if r.vacuous { "vacuous".into() } else { "hypotheses hold".into() },
        });
        Ok(Some(r))
    })?;

    let direction_filter = run.stage("direction_filter", || {
        let Some(eta0) = &config.check.direction_filter else { return Ok(None) };
        let theta = eta0.angle();
        let count = |wf: &WavefrontSet| {
            wf.singular().filter(|s| angle_gap_mod_sign(s.theta.angle(), theta) <= tol_angle + 1e-9).count()
        };
        let (input_matches, output_matches) = (count(&wf_input), count(&wf_output));
        let vacuous = input_matches > 0;
        let r = DirectionFilterReport { eta0_rad: theta, input_matches, output_matches, vacuous, holds: vacuous || output_matches == 0 };
        write_json(&dir.join("direction_filter.json"), &r)?;
        checks.push(CheckOutcome {
            name: "direction_filter".into(),
            passed: r.holds,
            detail: format!("{input_matches} input and {output_matches} output samples near eta0"),
        });
        Ok(Some(r))
    })?;

    run.stage("scanline", || write_scanline(&dir.join("scanline.csv"), &wf_input, &wf_output, config.scanline_y))?;

    let report = PipelineReport {
        passed: checks.iter().all(|c| c.passed),
        seed: config.seed,
        support_horizon,
        predict_horizon,
        input_singular: wf_input.singular_count(),
        output_singular: wf_output.singular_count(),
        checks,
    };
    run.stage("report", || write_json(&dir.join("report.json"), &report))?;
    Ok(PipelineOutcome {
        report,
        input,
        output,
        wf_input,
        wf_output,
        predicted,
        containment,
        microlocal,
        tube,
        direction_filter,
        output_dir: dir.to_path_buf(),
    })
}

/// Decay orders of both estimated sets on the position row nearest `y`.
fn write_scanline(path: &Path, wf_in: &WavefrontSet, wf_out: &WavefrontSet, y: f64) -> Result<()> {
    let row_y = wf_in
        .samples()
        .iter()
        .map(|s| s.x[1])
        .min_by(|a, b| (a - y).abs().total_cmp(&(b - y).abs()))
        .unwrap_or(y);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "theta_rad", "input_order", "output_order"])?;
    for (a, b) in wf_in.samples().iter().zip(wf_out.samples()) {
        if a.x[1] == row_y {
            w.write_record([
                a.x[0].to_string(),
                a.x[1].to_string(),
                a.theta.angle().to_string(),
                a.decay_order.to_string(),
                b.decay_order.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

