//! Exact identity checks over fixture environments.

use anyhow::{Context, Result};
use dolce::oracle::{
    identity_suite, random_env, random_lag_table, random_policy_table, CheckResult, DiscreteEnv, OracleFixture,
    RandomEnvSpec,
};
use dolce::rng::{rng_from_seed, stream};
use std::collections::BTreeMap;
use std::path::Path;

use crate::output::{fmt_f64, CsvTable};

/// Random environment, target table and lag shift drawn from `seed`.
pub fn fixture_from_seed(seed: u64) -> OracleFixture {
    let mut rng = rng_from_seed(seed);
    let env = random_env(&mut rng, &RandomEnvSpec::default());
    let target = random_policy_table(&mut rng, env.n_cur(), env.num_actions());
    let delta = random_lag_table(&mut rng, env.n_lag(), env.num_actions());
    OracleFixture { name: format!("random_{seed}"), env, target, delta, expect_fail: false }
}

/// Lag context 0 always leads to current context 0, where the logging policy
/// never takes action 1, so the lag marginal has no overlap there.
pub fn zero_lag_overlap_fixture() -> OracleFixture {
    OracleFixture {
        name: "zero_lag_overlap".into(),
        env: DiscreteEnv {
            p0: vec![0.5, 0.5],
            p_x_given_x0: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            pi0: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            q: vec![vec![vec![0.0, 1.0]; 2]; 2],
            sigma2: vec![vec![vec![1.0; 2]; 2]; 2],
        },
        target: vec![vec![0.5, 0.5]; 2],
        delta: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        expect_fail: true,
    }
}

/// Every `*.json` fixture in `dir`, in file name order.
pub fn load_fixtures(dir: &Path) -> Result<Vec<OracleFixture>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading fixture directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing fixture {}", p.display()))
        })
        .collect()
}

pub fn write_fixtures(dir: &Path, fixtures: &[OracleFixture]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for f in fixtures {
        let p = dir.join(format!("{}.json", f.name));
        std::fs::write(&p, serde_json::to_string_pretty(f)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FixtureResult {
    pub fixture: String,
    pub checks: Vec<CheckResult>,
}

/// Runs the identity suite on each fixture; auxiliary tables come from
/// streams of `seed` indexed by fixture position.
pub fn run(fixtures: &[OracleFixture], seed: u64) -> Result<Vec<FixtureResult>> {
    fixtures
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = stream(seed, i as u64);
            let checks = identity_suite(&f.env, &f.target, &f.delta, f.expect_fail, &mut rng)
                .with_context(|| format!("fixture {}", f.name))?;
            Ok(FixtureResult { fixture: f.name.clone(), checks })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSummary {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub runs: usize,
    pub expected_failures: usize,
    pub failures: usize,
}

/// Per check: the largest residual among fixtures where it was expected to
/// hold, and the count of unexpected outcomes.
pub fn summarize(results: &[FixtureResult]) -> Vec<CheckSummary> {
    let mut by: BTreeMap<&str, CheckSummary> = BTreeMap::new();
    for r in results {
        for c in &r.checks {
            let s = by.entry(c.name.as_str()).or_insert_with(|| CheckSummary {
                name: c.name.clone(),
                max_residual: 0.0,
                tolerance: c.tolerance,
                runs: 0,
                expected_failures: 0,
                failures: 0,
            });
            s.runs += 1;
            if c.expect_fail {
                s.expected_failures += 1;
            } else {
                s.max_residual = s.max_residual.max(c.residual);
            }
            if !c.passed() {
                s.failures += 1;
            }
        }
    }
    by.into_values().collect()
}

pub fn summary_table(summary: &[CheckSummary]) -> CsvTable {
    let mut t = CsvTable::new(&["check", "max_residual", "tolerance", "runs", "expected_failures", "failures"]);
    for s in summary {
        t.push(vec![
            s.name.clone(),
            fmt_f64(s.max_residual),
            fmt_f64(s.tolerance),
            s.runs.to_string(),
            s.expected_failures.to_string(),
            s.failures.to_string(),
        ]);
    }
    t
}
