//! Sweep, estimate and oracle-check commands, in process and through the binary.

use dolce::data::LaggedSample;
use dolce::estimators::{evaluate, EstimatorKind, PropensitySource};
use dolce::policy::PolicySpec;
use dolce::synth::{generate, make_env, SynthConfig};
use dolce::LaggedDataset;
use dolce_cli::config::{load, RunConfig};
use dolce_cli::{estimate, ope, opl};
use std::path::Path;
use std::process::Command;

fn small(overrides: &[&str]) -> RunConfig {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    load(None, &ov).unwrap()
}

#[test]
fn evaluation_smoke_run_has_one_finite_row() {
    let cfg = small(&["sweep.grid=[0.0]", "sweep.replications=1", "sweep.estimators=[\"DM\"]", "sweep.truth_mc=20000"]);
    let out = ope::run(&cfg, 1).unwrap();
    let t = ope::summary_table(&cfg, &out);
    assert_eq!(t.rows.len(), 1);
    for col in ["bias", "variance", "mse", "coverage", "truth"] {
        let v: f64 = t.rows[0][t.column(col).unwrap()].parse().unwrap();
        assert!(v.is_finite(), "{col}");
    }
}

#[test]
fn mse_is_squared_bias_plus_variance() {
    let cfg = small(&["sweep.grid=[0.3, 0.8]", "sweep.replications=5", "sweep.truth_mc=20000", "nuisance.k_cf=3"]);
    let out = ope::run(&cfg, 1).unwrap();
    assert_eq!(out.cells.len(), 8);
    for c in &out.cells {
        assert!((c.mse - (c.bias * c.bias + c.variance)).abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn learning_smoke_run_is_finite() {
    let cfg = small(&[
        "sweep.grid=[0.5]",
        "sweep.replications=1",
        "train.steps=1",
        "sweep.estimators=[\"IPS\", \"DR\", \"DOLCE\"]",
        "sweep.test_size=500",
        "nuisance.k_cf=3",
    ]);
    let out = opl::run(&cfg, 1).unwrap();
    assert_eq!(out.cells.len(), 3);
    for c in &out.cells {
        assert!(c.ni_mean.unwrap().is_finite() && c.osi_mean.is_finite() && c.regret_mean.is_finite());
    }
}

#[test]
fn zero_step_size_leaves_the_initial_policy() {
    let cfg = small(&[
        "sweep.grid=[0.5]",
        "sweep.replications=2",
        "train.steps=3",
        "train.step_size=0.0",
        "sweep.estimators=[\"IPS\", \"DOLCE\"]",
        "sweep.test_size=500",
        "nuisance.k_cf=3",
    ]);
    let out = opl::run(&cfg, 1).unwrap();
    for rep in 0..2 {
        let rs: Vec<_> = out.reps.iter().filter(|r| r.replication == rep).collect();
        assert_eq!(rs[0].ni, rs[1].ni);
        assert_eq!(rs[0].regret, rs[1].regret);
        assert_eq!(rs[0].osi, 0.0);
    }
}

fn synthetic(n: usize) -> (SynthConfig, LaggedDataset) {
    let cfg = SynthConfig { n, ..Default::default() };
    let env = make_env(&cfg).unwrap();
    (cfg.clone(), generate(&cfg, &env).unwrap().dataset)
}

fn uniform_spec(dir: &Path, a: usize) -> std::path::PathBuf {
    let p = dir.join("policy.json");
    std::fs::write(&p, serde_json::to_string(&PolicySpec::Uniform { num_actions: a }).unwrap()).unwrap();
    p
}

#[test]
fn exported_csv_estimates_match_in_process_run() {
    let (cfg, data) = synthetic(400);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    data.save_csv(&csv).unwrap();
    let policy = estimate::load_policy(&uniform_spec(dir.path(), cfg.num_actions)).unwrap();
    let loaded = estimate::load_dataset(&csv, &policy).unwrap();
    let ncfg = dolce::nuisance::NuisanceConfig { k_cf: 4, ..Default::default() };
    let out = estimate::run(&loaded, &policy, &ncfg, PropensitySource::Auto, 11).unwrap();
    let direct = evaluate(&data, &policy, &EstimatorKind::ALL, &ncfg, PropensitySource::Auto, 11).unwrap();
    assert_eq!(out.reports.len(), 4);
    for (a, b) in out.reports.iter().zip(&direct.reports) {
        assert_eq!(a.value.to_bits(), b.value.to_bits(), "{}", a.estimator);
    }
    assert_eq!(out.diagnostics.lags.len(), 1);
    let q = &out.diagnostics.lags[0].weight_quantiles;
    assert!(q.windows(2).all(|w| w[0].1 <= w[1].1));
}

#[test]
fn missing_lags_skip_dolce_and_keep_baselines() {
    let (cfg, data) = synthetic(300);
    let stripped = LaggedDataset::new(
        data.samples().iter().map(|s| LaggedSample { x_lags: vec![], ..s.clone() }).collect(),
        cfg.num_actions,
        vec![],
    )
    .unwrap();
    let policy = dolce::Policy::Uniform { num_actions: cfg.num_actions };
    let ncfg = dolce::nuisance::NuisanceConfig { k_cf: 3, ..Default::default() };
    let out = estimate::run(&stripped, &policy, &ncfg, PropensitySource::Auto, 0).unwrap();
    let names: Vec<&str> = out.reports.iter().map(|r| r.estimator.as_str()).collect();
    assert_eq!(names, ["DM", "IPS", "DR"]);
    assert!(out.diagnostics.warnings.iter().any(|w| w.contains("no lag columns")));
}

#[test]
fn policy_dimension_must_match_data() {
    let (_, data) = synthetic(50);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    data.save_csv(&csv).unwrap();
    let spec = PolicySpec::LinearSoftmax { theta: vec![vec![0.0; 4]; 5] };
    let p = dir.path().join("p.json");
    std::fs::write(&p, serde_json::to_string(&spec).unwrap()).unwrap();
    let policy = estimate::load_policy(&p).unwrap();
    let err = estimate::load_dataset(&csv, &policy).unwrap_err().to_string();
    assert!(err.contains("context features"), "{err}");
}

fn dolce_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dolce"))
}

#[test]
fn shipped_fixtures_pass_through_the_binary() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = dolce_bin().args(["oracle-check", "--fixtures"]).arg(&fixtures).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("theorem1_unbiased"));
}

#[test]
fn sweep_binary_writes_outputs_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let status = dolce_bin()
        .args(["synth-ope", "--set", "sweep.grid=[0.2]", "--set", "sweep.replications=2", "--set", "sweep.truth_mc=5000"])
        .args(["--set", "sweep.estimators=[\"DM\",\"IPS\"]", "--seed", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["ope_summary.csv", "ope_replications.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["config"].as_str().unwrap().contains("seed = 5"));

    let bad = dolce_bin().args(["synth-ope", "--set", "sweep.bogus=1", "--set", "synth.nope=2"]).output().unwrap();
    assert!(!bad.status.success());
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("sweep.bogus") && err.contains("synth.nope"), "{err}");
}

#[test]
fn estimate_binary_writes_report_and_diagnostics() {
    let (cfg, data) = synthetic(300);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    data.save_csv(&csv).unwrap();
    let spec = uniform_spec(dir.path(), cfg.num_actions);
    let out_dir = dir.path().join("out");
    let out = dolce_bin()
        .args(["estimate", "--set", "nuisance.k_cf=3", "--data"])
        .arg(&csv)
        .arg("--policy")
        .arg(&spec)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est = std::fs::read_to_string(out_dir.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().count(), 5);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["lags"][0]["alc"].as_f64().unwrap() >= 0.0);
}
