//! Monte Carlo learning sweeps on the synthetic benchmark.

use anyhow::{Context, Result};
use dolce::opl::{init_theta, opl_metrics, train_with, GradientEstimator, OplNuisances, TrainConfig};
use dolce::rng::mix_seed;
use dolce::stats::{mean, variance};
use dolce::synth::{generate, make_env, SynthConfig, SynthEnv, TestSet};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::ope::seeds;
use crate::output::{fmt_f64, fmt_opt, CsvTable};
use crate::run_parallel;

const TEST_STREAM: u64 = 0x7E57;

#[derive(Clone, Debug, PartialEq)]
pub struct OplRep {
    pub grid_index: usize,
    pub replication: usize,
    pub estimator: GradientEstimator,
    pub ni: Option<f64>,
    pub osi: f64,
    pub regret: f64,
    pub grad_norms: Vec<f64>,
    pub data_seed: u64,
    pub init_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OplCell {
    pub grid_index: usize,
    pub value: f64,
    pub estimator: GradientEstimator,
    pub ni_mean: Option<f64>,
    pub ni_se: Option<f64>,
    pub osi_mean: f64,
    pub osi_se: f64,
    pub regret_mean: f64,
    pub regret_se: f64,
    pub replications: usize,
}

#[derive(Clone, Debug)]
pub struct OplOutput {
    pub reps: Vec<OplRep>,
    pub cells: Vec<OplCell>,
}

impl OplOutput {
    pub fn cell(&self, grid_index: usize, est: GradientEstimator) -> Option<&OplCell> {
        self.cells.iter().find(|c| c.grid_index == grid_index && c.estimator == est)
    }
}

struct GridPoint {
    cfg: SynthConfig,
    env: SynthEnv,
    test: TestSet,
}

fn replicate(cfg: &RunConfig, gp: &GridPoint, ests: &[GradientEstimator], gi: usize, rep: usize) -> Result<Vec<OplRep>> {
    let (data_seed, fold_seed) = seeds(cfg.sweep.seed, rep);
    let c = SynthConfig { data_seed, ..gp.cfg.clone() };
    let sd = generate(&c, &gp.env)?;
    let v0 = gp.test.logging_value(&gp.env, &c, sd.threshold);
    let init_seed = mix_seed(cfg.train.init_seed, rep as u64);
    let theta0 = init_theta(c.num_actions, c.d, init_seed, cfg.train.init_scale);
    let nuis = OplNuisances::fit(&sd.dataset, &cfg.nuisance, cfg.sweep.propensity, ests, fold_seed)
        .with_context(|| format!("grid value {gi}, replication {rep}"))?;
    let mut out = Vec::with_capacity(ests.len());
    for &est in ests {
        let tc = TrainConfig { estimator: est, ..cfg.train.clone() };
        let res = train_with(&sd.dataset, &nuis, &tc, &theta0)
            .with_context(|| format!("{} training, grid value {gi}, replication {rep}", est.name()))?;
        let m = opl_metrics(&gp.test, &res.policy, v0, &theta0, &res.first_gradient, tc.step_size)?;
        out.push(OplRep {
            grid_index: gi,
            replication: rep,
            estimator: est,
            ni: m.ni,
            osi: m.osi,
            regret: m.regret,
            grad_norms: res.trajectory.iter().map(|s| s.grad_norm).collect(),
            data_seed,
            init_seed,
        });
    }
    Ok(out)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

pub fn run(cfg: &RunConfig, jobs: usize) -> Result<OplOutput> {
    cfg.validate()?;
    let ests = cfg.opl_estimators()?;
    let grid = &cfg.sweep.grid;
    let points: Vec<GridPoint> = grid
        .iter()
        .map(|v| {
            let mut c = cfg.sweep.var.apply(&cfg.synth, *v)?;
            c.exploration_floor = cfg.train.exploration_floor;
            let env = make_env(&c)?;
            let test = TestSet::new(&c, &env, cfg.sweep.test_size, mix_seed(cfg.sweep.seed, TEST_STREAM));
            Ok(GridPoint { cfg: c, env, test })
        })
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|g| (0..cfg.sweep.replications).map(move |b| (g, b))).collect();
    let reps: Vec<OplRep> = run_parallel(jobs, || {
        tasks
            .par_iter()
            .map(|&(g, b)| replicate(cfg, &points[g], &ests, g, b))
            .collect::<Result<Vec<Vec<OplRep>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let mut cells = Vec::new();
    for (gi, value) in grid.iter().enumerate() {
        for &e in &ests {
            let rs: Vec<&OplRep> = reps.iter().filter(|r| r.grid_index == gi && r.estimator == e).collect();
            let ni: Vec<f64> = rs.iter().filter_map(|r| r.ni).collect();
            let (ni_mean, ni_se) = if ni.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_se(&ni);
                (Some(m), Some(s))
            };
            let (osi_mean, osi_se) = mean_se(&rs.iter().map(|r| r.osi).collect::<Vec<_>>());
            let (regret_mean, regret_se) = mean_se(&rs.iter().map(|r| r.regret).collect::<Vec<_>>());
            cells.push(OplCell {
                grid_index: gi,
                value: *value,
                estimator: e,
                ni_mean,
                ni_se,
                osi_mean,
                osi_se,
                regret_mean,
                regret_se,
                replications: rs.len(),
            });
        }
    }
    Ok(OplOutput { reps, cells })
}

pub fn summary_table(cfg: &RunConfig, out: &OplOutput) -> CsvTable {
    let mut t = CsvTable::new(&[
        "sweep_var", "value", "estimator", "ni_mean", "ni_se", "osi_mean", "osi_se", "regret_mean", "regret_se",
        "replications", "steps", "step_size", "config_hash", "seed", "init_seed", "env_seed",
    ]);
    let hash = cfg.hash();
    for c in &out.cells {
        t.push(vec![
            cfg.sweep.var.name().to_string(),
            fmt_f64(c.value),
            c.estimator.name().to_string(),
            fmt_opt(c.ni_mean),
            fmt_opt(c.ni_se),
            fmt_f64(c.osi_mean),
            fmt_f64(c.osi_se),
            fmt_f64(c.regret_mean),
            fmt_f64(c.regret_se),
            c.replications.to_string(),
            cfg.train.steps.to_string(),
            fmt_f64(cfg.train.step_size),
            hash.clone(),
            cfg.sweep.seed.to_string(),
            cfg.train.init_seed.to_string(),
            cfg.synth.env_seed.to_string(),
        ]);
    }
    t
}

pub fn replication_table(cfg: &RunConfig, out: &OplOutput) -> CsvTable {
    let mut t = CsvTable::new(&[
        "sweep_var", "value", "replication", "estimator", "ni", "osi", "regret", "config_hash", "data_seed", "init_seed",
    ]);
    let hash = cfg.hash();
    for r in &out.reps {
        t.push(vec![
            cfg.sweep.var.name().to_string(),
            fmt_f64(cfg.sweep.grid[r.grid_index]),
            r.replication.to_string(),
            r.estimator.name().to_string(),
            fmt_opt(r.ni),
            fmt_f64(r.osi),
            fmt_f64(r.regret),
            hash.clone(),
            r.data_seed.to_string(),
            r.init_seed.to_string(),
        ]);
    }
    t
}

pub fn trajectory_table(cfg: &RunConfig, out: &OplOutput) -> CsvTable {
    let mut t = CsvTable::new(&["sweep_var", "value", "replication", "estimator", "step", "grad_norm"]);
    for r in &out.reps {
        for (s, g) in r.grad_norms.iter().enumerate() {
            t.push(vec![
                cfg.sweep.var.name().to_string(),
                fmt_f64(cfg.sweep.grid[r.grid_index]),
                r.replication.to_string(),
                r.estimator.name().to_string(),
                s.to_string(),
                fmt_f64(*g),
            ]);
        }
    }
    t
}
