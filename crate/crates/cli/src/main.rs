//! `mlprop`: command-line access to the operators, the estimator and the pipeline.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage error, 3 invalid input,
//! 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlprop_core::antiderivative::{cumulative_antiderivative, spectral_antiderivative, xray_transform, SupportBound};
use mlprop_core::io::{load_wavefront_csv, read_field, save_wavefront_csv, write_field};
use mlprop_core::line_convolution::{
    convolve_pullback, convolve_quadrature, validate_support_bounded, Curve, SupportHorizon, Weight,
    DEFAULT_MEMORY_BUDGET,
};
use mlprop_core::phantoms::{rasterize, PhantomSpec};
use mlprop_core::pipeline::{run_pipeline_in, ExperimentConfig};
use mlprop_core::propagation::{
    check_containment, microlocal_bound_check, predict_curve, predict_ray, PredictOptions, PredictedSet,
};
use mlprop_core::wavefront::{estimate_wavefront, EstimatorParams};
use mlprop_core::{make_grid, Direction, Error};

#[derive(Parser)]
#[command(name = "mlprop", version, about = "Directional antiderivatives, line convolutions and wavefront sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom from a JSON spec.
    Phantom {
        #[arg(long)]
        spec: PathBuf,
        /// Per-axis bounds, `lo,hi,lo,hi,...`.
        #[arg(long, allow_hyphen_values = true)]
        extent: String,
        /// Cells per axis, `n1,n2,...`.
        #[arg(long)]
        resolution: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Directional antiderivative of a field.
    Antideriv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        v: String,
        #[arg(long, value_enum, default_value_t = Method::Cumulative)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convolution with a weighted curve measure.
    Convolve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        curve: PathBuf,
        /// Weight JSON; unit weight when omitted.
        #[arg(long)]
        weight: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ConvMethod::Quadrature)]
        method: ConvMethod,
        /// Asserted support horizon; scanned when omitted.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 1000.0)]
        t_probe_max: f64,
        #[arg(long, default_value_t = 64)]
        y_resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Line integrals of a field along a direction.
    Xray {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        v: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the wavefront set of a field.
    WfEstimate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        params: EstimatorFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the propagated wavefront set along a ray or curve.
    WfPredict {
        #[arg(long)]
        wf: PathBuf,
        #[arg(long, default_value_t = 72)]
        dirs: usize,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "curve", required_unless_present = "curve")]
        v: Option<String>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        t_step: Option<f64>,
        #[arg(long)]
        angle_tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an estimated set against a prediction, or against the input set and `v`.
    WfCheck {
        #[arg(long)]
        estimated: PathBuf,
        #[arg(long, default_value_t = 72)]
        dirs: usize,
        #[arg(long, required_unless_present = "input_wf")]
        predicted: Option<PathBuf>,
        /// Input wavefront CSV for the characteristic-set bound; needs `--v`.
        #[arg(long, requires = "v", conflicts_with = "predicted")]
        input_wf: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        v: Option<String>,
        #[arg(long)]
        tol_space: f64,
        #[arg(long)]
        tol_angle: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Cumulative,
    Spectral,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvMethod {
    Quadrature,
    Pullback,
}

#[derive(Args)]
struct EstimatorFlags {
    /// Full parameter set as JSON; individual flags override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    window_radius_cells: Option<usize>,
    #[arg(long)]
    cone_half_width: Option<f64>,
    #[arg(long)]
    dirs: Option<usize>,
    #[arg(long)]
    threshold_order: Option<f64>,
    #[arg(long)]
    stride_cells: Option<usize>,
    #[arg(long)]
    r_min_cells: Option<f64>,
}

impl EstimatorFlags {
    fn resolve(&self) -> Result<EstimatorParams, Error> {
        let mut p: EstimatorParams = match &self.params {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => EstimatorParams::default(),
        };
        if let Some(v) = self.window_radius_cells {
            p.window_radius_cells = v;
        }
        if let Some(v) = self.cone_half_width {
            p.cone_half_width = v;
        }
        if let Some(v) = self.dirs {
            p.dirs = v;
        }
        if let Some(v) = self.threshold_order {
            p.threshold_order = v;
        }
        if let Some(v) = self.stride_cells {
            p.stride_cells = v;
        }
        if let Some(v) = self.r_min_cells {
            p.r_min_cells = v;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Result of a command: either success or a failed check.
enum Outcome {
    Pass,
    CheckFailed(String),
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::InvalidParameter(format!("bad {what} entry {p:?}"))))
        .collect()
}

fn parse_direction(s: &str) -> Result<Direction, Error> {
    Direction::normalized(&parse_list::<f64>(s, "direction")?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn execute(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Phantom { spec, extent, resolution, out } => {
            let bounds = parse_list::<f64>(&extent, "extent")?;
            if bounds.len() % 2 != 0 {
                return Err(Error::InvalidGrid("extent needs lo,hi pairs".into()));
            }
            let extent: Vec<(f64, f64)> = bounds.chunks(2).map(|c| (c[0], c[1])).collect();
            let grid = make_grid(&extent, &parse_list::<usize>(&resolution, "resolution")?)?;
            let spec: PhantomSpec = read_json(&spec)?;
            write_field(out, &rasterize(&spec, &grid)?)?;
        }
        Command::Antideriv { input, v, method, out } => {
            let field = read_field(input)?;
            let v = parse_direction(&v)?;
            let result = match method {
                Method::Cumulative => cumulative_antiderivative(&field, &v, field.grid())?,
                Method::Spectral => spectral_antiderivative(&field, &v, &SupportBound::for_field(&field, &v)?)?,
            };
            write_field(out, &result)?;
        }
        Command::Convolve { input, curve, weight, method, horizon, t_probe_max, y_resolution, out } => {
            let field = read_field(input)?;
            let curve: Curve = read_json(&curve)?;
            let weight: Weight = match weight {
                Some(p) => read_json(&p)?,
                None => Weight::Unit,
            };
            let horizon = match horizon {
                Some(t) => SupportHorizon::asserted(t)?,
                None => validate_support_bounded(&curve, &field, field.grid(), t_probe_max)?,
            };
            let result = match method {
                ConvMethod::Quadrature => convolve_quadrature(&field, &curve, &weight, &horizon, field.grid())?,
                ConvMethod::Pullback => {
                    convolve_pullback(&field, &curve, &weight, &horizon, y_resolution, DEFAULT_MEMORY_BUDGET)?
                }
            };
            write_field(out, &result)?;
        }
        Command::Xray { input, v, out } => {
            let field = read_field(input)?;
            write_field(out, &xray_transform(&field, &parse_direction(&v)?)?)?;
        }
        Command::WfEstimate { input, params, out } => {
            let field = read_field(input)?;
            save_wavefront_csv(out, &estimate_wavefront(&field, &params.resolve()?)?)?;
        }
        Command::WfPredict { wf, dirs, v, curve, horizon, t_step, angle_tol, out } => {
            let wf = load_wavefront_csv(wf, dirs)?;
            let opts = PredictOptions { t_step, angle_tol };
            let predicted = match (v, curve) {
                (Some(v), _) => predict_ray(&wf, &parse_direction(&v)?, horizon, &opts)?,
                (None, Some(c)) => predict_curve(&wf, &read_json(&c)?, horizon, &opts)?,
                (None, None) => unreachable!("clap requires --v or --curve"),
            };
            write_json(&out, &predicted)?;
        }
        Command::WfCheck { estimated, dirs, predicted, input_wf, v, tol_space, tol_angle, out } => {
            let est = load_wavefront_csv(estimated, dirs)?;
            let (passed, summary, json) = if let Some(p) = predicted {
                let predicted: PredictedSet = read_json(&p)?;
                let r = check_containment(&est, &predicted, tol_space, tol_angle)?;
                let s = format!("{} of {} singular samples contained", r.contained, r.checked);
                (r.passed(), s, serde_json::to_value(&r)?)
            } else {
                let input = load_wavefront_csv(input_wf.expect("clap requires --input-wf"), dirs)?;
                let v = parse_direction(v.as_deref().expect("clap requires --v"))?;
                let r = microlocal_bound_check(&est, &input, &v, tol_space, tol_angle)?;
                let s = format!("{} violations among {} singular samples", r.violations.len(), r.checked);
                (r.passed(), s, serde_json::to_value(&r)?)
            };
            match out {
                Some(path) => write_json(&path, &json)?,
                None => println!("{}", serde_json::to_string_pretty(&json)?),
            }
            if !passed {
                return Ok(Outcome::CheckFailed(summary));
            }
            eprintln!("{summary}");
        }
        Command::Run { config, output_dir } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = output_dir.unwrap_or_else(|| config.output_dir.clone());
            let outcome = run_pipeline_in(&config, &dir).map_err(|e| {
                eprintln!("mlprop: stage {} failed", e.stage);
                e.error
            })?;
            for c in &outcome.report.checks {
                eprintln!("{:<18} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            if !outcome.report.passed {
                return Ok(Outcome::CheckFailed(format!("see {}", dir.join("report.json").display())));
            }
        }
    }
    Ok(Outcome::Pass)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("MLPROP_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("MLPROP_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| execute(cli.command));
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("mlprop: check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("mlprop: {e}");
            ExitCode::from(if e.is_numeric() { 4 } else { 3 })
        }
    }
}
