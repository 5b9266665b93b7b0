//! Estimates for a logged dataset and a policy spec file.

use anyhow::{bail, Context, Result};
use dolce::estimators::{evaluate, softmin_weights, EstimatorKind, Evaluation, PropensitySource};
use dolce::nuisance::NuisanceConfig;
use dolce::policy::{Policy, PolicySpec};
use dolce::stats::quantile;
use dolce::{EstimateReport, LaggedDataset};
use serde::Serialize;
use std::path::Path;

use crate::output::CsvTable;

/// Quantile levels reported for the lag weights.
const WEIGHT_LEVELS: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 1.0];

#[derive(Clone, Debug, Serialize)]
pub struct LagDiagnostics {
    pub lag: usize,
    pub label: String,
    pub alc: f64,
    pub alpha: f64,
    pub value: f64,
    pub ess: f64,
    /// `(level, quantile)` pairs of the clipped weights.
    pub weight_quantiles: Vec<(f64, f64)>,
    pub clipped_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub seed: u64,
    pub lags: Vec<LagDiagnostics>,
    pub ess: Vec<(String, Option<f64>)>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct EstimateOutput {
    pub reports: Vec<EstimateReport>,
    pub diagnostics: Diagnostics,
}

pub fn load_policy(path: &Path) -> Result<Policy> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading policy spec {}", path.display()))?;
    let spec: PolicySpec =
        serde_json::from_str(&text).with_context(|| format!("parsing policy spec {}", path.display()))?;
    Ok(spec.build()?)
}

/// Loads the dataset with the policy's action count and checks that the
/// policy's context dimension matches the data.
pub fn load_dataset(path: &Path, policy: &Policy) -> Result<LaggedDataset> {
    let f = std::fs::File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    let data = LaggedDataset::read_csv(f, Some(policy.num_actions()))
        .with_context(|| format!("reading dataset {}", path.display()))?;
    if let Some(d) = policy.dim() {
        if d != data.dim() {
            bail!("policy expects {d} context features but the dataset has {}", data.dim());
        }
    }
    Ok(data)
}

fn lag_diagnostics(data: &LaggedDataset, ev: &Evaluation, cfg: &NuisanceConfig) -> Result<Vec<LagDiagnostics>> {
    let Some(ns) = &ev.nuisances else { return Ok(Vec::new()) };
    let alpha = softmin_weights(&ns.alcs(), cfg.tau)?;
    let dolce = ev.reports.iter().find(|r| r.estimator == "DOLCE");
    ns.lags
        .iter()
        .zip(&alpha)
        .enumerate()
        .map(|(j, (l, a))| {
            let w = &l.weights;
            Ok(LagDiagnostics {
                lag: l.lag,
                label: data.lag_labels().get(l.lag).cloned().unwrap_or_default(),
                alc: l.alc,
                alpha: *a,
                value: dolce.and_then(|r| r.per_lag_values.get(j).copied()).unwrap_or(f64::NAN),
                ess: dolce::estimators::ess(w)?,
                weight_quantiles: WEIGHT_LEVELS.iter().map(|p| (*p, quantile(w, *p))).collect(),
                clipped_fraction: w.iter().filter(|v| **v >= ns.clip).count() as f64 / w.len() as f64,
            })
        })
        .collect()
}

/// Runs every estimator. Without lag columns the baselines still run and
/// the refusal of DOLCE is recorded as a warning.
pub fn run(data: &LaggedDataset, policy: &Policy, cfg: &NuisanceConfig, source: PropensitySource, seed: u64) -> Result<EstimateOutput> {
    let mut warnings = Vec::new();
    let kinds: Vec<EstimatorKind> = if data.num_lags() == 0 {
        warnings.push(
            "DOLCE skipped: the dataset has no lag columns. Add columns lag<k>_0..lag<k>_{d-1} holding \
             the k-th lagged context to enable it."
                .to_string(),
        );
        vec![EstimatorKind::Dm, EstimatorKind::Ips, EstimatorKind::Dr]
    } else {
        EstimatorKind::ALL.to_vec()
    };
    let ev = evaluate(data, policy, &kinds, cfg, source, seed)?;
    let lags = lag_diagnostics(data, &ev, cfg)?;
    let n = data.len() as f64;
    for r in &ev.reports {
        if let Some(e) = r.ess {
            if e < 0.1 * n {
                warnings.push(format!("{}: effective sample size {e:.1} is below 10% of n", r.estimator));
            }
        }
    }
    for l in &lags {
        if l.clipped_fraction > 0.05 {
            warnings.push(format!("lag {}: {:.1}% of weights hit the clip", l.lag + 1, 100.0 * l.clipped_fraction));
        }
    }
    let diagnostics = Diagnostics {
        n: data.len(),
        num_actions: data.num_actions(),
        dim: data.dim(),
        seed,
        ess: ev.reports.iter().map(|r| (r.estimator.clone(), r.ess)).collect(),
        lags,
        warnings,
    };
    Ok(EstimateOutput { reports: ev.reports, diagnostics })
}

pub fn estimates_table(out: &EstimateOutput, config_hash: &str) -> CsvTable {
    let k = out.reports.iter().map(|r| r.lag_weights_alpha.len()).max().unwrap_or(0);
    let mut header = EstimateReport::csv_header(k);
    header.extend(["config_hash".to_string(), "seed".to_string()]);
    let mut t = CsvTable { header, rows: Vec::new() };
    for r in &out.reports {
        let mut row = r.csv_record(k);
        row.extend([config_hash.to_string(), out.diagnostics.seed.to_string()]);
        t.push(row);
    }
    t
}
