use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mlprop_core::antiderivative::cumulative_antiderivative;
use mlprop_core::grid::{make_grid, PhaseSpaceSample, SampledField, WavefrontSet};
use mlprop_core::io::{read_field, save_wavefront_csv, write_field};
use mlprop_core::line_convolution::Curve;
use mlprop_core::propagation::{predict_curve, PredictOptions};
use mlprop_core::Direction;

fn mlprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlprop")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mlprop(&["antideriv", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(mlprop(&[]).status.code(), Some(2));
    assert_eq!(mlprop(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mlf");
    fs::write(&bad, b"not a field").unwrap();
    let out = mlprop(&["antideriv", "--input", p(&bad), "--v", "1,0", "--out", p(&dir.path().join("o.mlf"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn antideriv_wrapper_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(&[(-1.0, 3.0), (-1.0, 3.0)], &[128, 128]).unwrap();
    let f = SampledField::from_fn(g.clone(), 1, |x| {
        if (0.0..=1.0).contains(&x[0]) && (0.0..=1.0).contains(&x[1]) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let (input, out) = (dir.path().join("sq.mlf"), dir.path().join("a.mlf"));
    write_field(&input, &f).unwrap();
    let status = mlprop(&["antideriv", "--input", p(&input), "--v", "1,0", "--method", "cumulative", "--out", p(&out)]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let direct = cumulative_antiderivative(&f, &Direction::new(vec![1.0, 0.0]).unwrap(), &g).unwrap();
    let via_cli = read_field(&out).unwrap();
    assert_eq!(via_cli.grid(), direct.grid());
    assert!(via_cli.values().iter().zip(direct.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!((via_cli.interpolate(&[2.0, 0.5]) - 1.0).abs() <= 2.0 * g.spacing()[0]);
}

#[test]
fn wf_predict_on_the_arc_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let theta = Direction::new(vec![0.0, 1.0]).unwrap();
    let sample = PhaseSpaceSample { x: vec![0.0, 0.0], theta, decay_order: 0.5, log_constant: 0.0, singular: true };
    let wf_path = dir.path().join("wf.csv");
    save_wavefront_csv(&wf_path, &WavefrontSet::new(vec![sample], None, 72).unwrap()).unwrap();
    let curve_path = dir.path().join("arc.json");
    fs::write(&curve_path, r#"{"kind":"arc","radius":1.0,"rate":1.0}"#).unwrap();
    let out = dir.path().join("pred.json");
    let status = mlprop(&["wf-predict", "--wf", p(&wf_path), "--curve", p(&curve_path), "--horizon", "7", "--out", p(&out)]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let wf = mlprop_core::io::load_wavefront_csv(&wf_path, 72).unwrap();
    let curve = Curve::Arc { radius: 1.0, rate: 1.0 };
    let direct = predict_curve(&wf, &curve, 7.0, &PredictOptions::default()).unwrap();
    let mut expected = serde_json::to_string_pretty(&direct).unwrap();
    expected.push('\n');
    assert_eq!(fs::read_to_string(&out).unwrap(), expected);
    for y in [0.0, 2.0] {
        assert!(direct.propagated.iter().any(|s| s.point.x[0].abs() < 1e-9 && (s.point.x[1] - y).abs() < 1e-9));
    }
}

#[test]
fn wf_check_reports_failures_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let mk = |x: f64, y: f64, a: f64| PhaseSpaceSample {
        x: vec![x, y],
        theta: Direction::from_angle(a),
        decay_order: 0.5,
        log_constant: 0.0,
        singular: true,
    };
    let input = dir.path().join("in.csv");
    let est = dir.path().join("est.csv");
    save_wavefront_csv(&input, &WavefrontSet::new(vec![], None, 72).unwrap()).unwrap();
    save_wavefront_csv(&est, &WavefrontSet::new(vec![mk(1.0, 0.0, std::f64::consts::FRAC_PI_4)], None, 72).unwrap())
        .unwrap();
    let args = ["wf-check", "--estimated", p(&est), "--input-wf", p(&input), "--v", "1,0", "--tol-space", "0.25", "--tol-angle", "0.1"];
    assert_eq!(mlprop(&args).status.code(), Some(1));
    save_wavefront_csv(&est, &WavefrontSet::new(vec![mk(1.0, 0.0, std::f64::consts::FRAC_PI_2)], None, 72).unwrap())
        .unwrap();
    assert_eq!(mlprop(&args).status.code(), Some(0));
}

#[test]
fn run_delta_ray_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/delta-ray.json");
    let out = mlprop(&["run", "--config", p(&config), "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn run_closed_curve_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/closed-curve.json");
    let out = mlprop(&["run", "--config", p(&config), "--output-dir", p(dir.path())]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validate_support_bounded"));
    assert!(dir.path().join("FAILED").exists());
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_mlprop"))
        .env("MLPROP_THREADS", "zero")
        .args(["run", "--config", "missing.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
