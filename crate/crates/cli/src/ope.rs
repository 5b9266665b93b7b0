//! Monte Carlo evaluation sweeps on the synthetic benchmark.

use anyhow::{Context, Result};
use dolce::estimators::{evaluate, EstimatorKind};
use dolce::rng::mix_seed;
use dolce::stats::{mean, variance};
use dolce::synth::{generate, make_env, target_policy, true_value_mc, SynthConfig};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{fmt_f64, fmt_opt, CsvTable};
use crate::run_parallel;

/// Stream index separating fold seeds from data seeds.
const FOLD_STREAM: u64 = 0xF01D;

/// One estimator on one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RepResult {
    pub grid_index: usize,
    pub replication: usize,
    pub estimator: EstimatorKind,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ess: Option<f64>,
    pub data_seed: u64,
    pub fold_seed: u64,
}

/// Summary over replications for one grid value and estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub grid_index: usize,
    pub value: f64,
    pub estimator: EstimatorKind,
    pub truth: f64,
    pub bias: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_se: f64,
    pub variance: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_ess: Option<f64>,
    pub replications: usize,
}

#[derive(Clone, Debug)]
pub struct OpeOutput {
    pub truths: Vec<f64>,
    pub reps: Vec<RepResult>,
    pub cells: Vec<CellSummary>,
}

impl OpeOutput {
    pub fn cell(&self, grid_index: usize, est: EstimatorKind) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.grid_index == grid_index && c.estimator == est)
    }
}

pub fn seeds(root: u64, rep: usize) -> (u64, u64) {
    let data = mix_seed(root, rep as u64);
    (data, mix_seed(data, FOLD_STREAM))
}

fn replicate(cfg: &RunConfig, grid_cfg: &SynthConfig, env: &dolce::synth::SynthEnv, kinds: &[EstimatorKind], gi: usize, rep: usize) -> Result<Vec<RepResult>> {
    let (data_seed, fold_seed) = seeds(cfg.sweep.seed, rep);
    let c = SynthConfig { data_seed, ..grid_cfg.clone() };
    let data = generate(&c, env)?.dataset;
    let policy = target_policy(env, c.target_epsilon)?;
    let ev = evaluate(&data, &policy, kinds, &cfg.nuisance, cfg.sweep.propensity, fold_seed)
        .with_context(|| format!("grid value {gi}, replication {rep}"))?;
    Ok(ev
        .reports
        .into_iter()
        .zip(kinds)
        .map(|(r, &k)| RepResult {
            grid_index: gi,
            replication: rep,
            estimator: k,
            estimate: r.value,
            se: r.se,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            ess: r.ess,
            data_seed,
            fold_seed,
        })
        .collect())
}

/// Runs every (grid value, replication) task and summarizes per estimator.
pub fn run(cfg: &RunConfig, jobs: usize) -> Result<OpeOutput> {
    cfg.validate()?;
    let kinds = cfg.ope_estimators()?;
    let grid = &cfg.sweep.grid;
    let grid_cfgs: Vec<SynthConfig> = grid.iter().map(|v| cfg.sweep.var.apply(&cfg.synth, *v)).collect::<Result<_>>()?;
    let envs = grid_cfgs.iter().map(make_env).collect::<dolce::Result<Vec<_>>>()?;
    let truths: Vec<f64> = run_parallel(jobs, || {
        grid_cfgs
            .par_iter()
            .zip(&envs)
            .map(|(c, e)| {
                let policy = target_policy(e, c.target_epsilon)?;
                Ok(true_value_mc(c, e, &policy, cfg.sweep.truth_mc)?)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let tasks: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|g| (0..cfg.sweep.replications).map(move |b| (g, b))).collect();
    let reps: Vec<RepResult> = run_parallel(jobs, || {
        tasks
            .par_iter()
            .map(|&(g, b)| replicate(cfg, &grid_cfgs[g], &envs[g], &kinds, g, b))
            .collect::<Result<Vec<Vec<RepResult>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let mut cells = Vec::new();
    for (gi, value) in grid.iter().enumerate() {
        for &k in &kinds {
            let rs: Vec<&RepResult> = reps.iter().filter(|r| r.grid_index == gi && r.estimator == k).collect();
            let est: Vec<f64> = rs.iter().map(|r| r.estimate).collect();
            let truth = truths[gi];
            let var = variance(&est);
            let bias = mean(&est) - truth;
            let ess: Vec<f64> = rs.iter().filter_map(|r| r.ess).collect();
            cells.push(CellSummary {
                grid_index: gi,
                value: *value,
                estimator: k,
                truth,
                bias,
                bias_se: (var / est.len() as f64).sqrt(),
                variance: var,
                mse: mean(&est.iter().map(|v| (v - truth).powi(2)).collect::<Vec<_>>()),
                coverage: rs.iter().filter(|r| r.ci_low <= truth && truth <= r.ci_high).count() as f64 / rs.len() as f64,
                mean_ess: if ess.is_empty() { None } else { Some(mean(&ess)) },
                replications: rs.len(),
            });
        }
    }
    Ok(OpeOutput { truths, reps, cells })
}

pub fn summary_table(cfg: &RunConfig, out: &OpeOutput) -> CsvTable {
    let mut t = CsvTable::new(&[
        "sweep_var", "value", "estimator", "bias", "variance", "mse", "coverage", "mean_ess", "truth", "bias_se",
        "replications", "config_hash", "seed", "env_seed",
    ]);
    let hash = cfg.hash();
    for c in &out.cells {
        t.push(vec![
            cfg.sweep.var.name().to_string(),
            fmt_f64(c.value),
            c.estimator.name().to_string(),
            fmt_f64(c.bias),
            fmt_f64(c.variance),
            fmt_f64(c.mse),
            fmt_f64(c.coverage),
            fmt_opt(c.mean_ess),
            fmt_f64(c.truth),
            fmt_f64(c.bias_se),
            c.replications.to_string(),
            hash.clone(),
            cfg.sweep.seed.to_string(),
            cfg.synth.env_seed.to_string(),
        ]);
    }
    t
}

pub fn replication_table(cfg: &RunConfig, out: &OpeOutput) -> CsvTable {
    let mut t = CsvTable::new(&[
        "sweep_var", "value", "replication", "estimator", "estimate", "se", "ci_low", "ci_high", "ess", "truth",
        "config_hash", "data_seed", "fold_seed", "env_seed",
    ]);
    let hash = cfg.hash();
    for r in &out.reps {
        t.push(vec![
            cfg.sweep.var.name().to_string(),
            fmt_f64(cfg.sweep.grid[r.grid_index]),
            r.replication.to_string(),
            r.estimator.name().to_string(),
            fmt_f64(r.estimate),
            fmt_f64(r.se),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            fmt_opt(r.ess),
            fmt_f64(out.truths[r.grid_index]),
            hash.clone(),
            r.data_seed.to_string(),
            r.fold_seed.to_string(),
            cfg.synth.env_seed.to_string(),
        ]);
    }
    t
}
