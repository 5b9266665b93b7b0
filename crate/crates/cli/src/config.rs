//! Run configuration: a TOML file with one section per component, plus
//! `section.key=value` overrides from the command line.

use anyhow::{anyhow, bail, Context, Result};
use dolce::estimators::{EstimatorKind, PropensitySource};
use dolce::nuisance::NuisanceConfig;
use dolce::opl::{GradientEstimator, TrainConfig};
use dolce::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use toml::{Table, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    R,
    MixLambda,
    NumActions,
    N,
    InteractionEta,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            Self::R => "r",
            Self::MixLambda => "mix_lambda",
            Self::NumActions => "num_actions",
            Self::N => "n",
            Self::InteractionEta => "interaction_eta",
        }
    }

    /// Copy of `base` with this variable set to `v`.
    pub fn apply(self, base: &SynthConfig, v: f64) -> Result<SynthConfig> {
        let mut c = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                bail!("{} grid values must be positive integers, got {v}", self.name())
            }
        };
        match self {
            Self::R => c.violation_ratio = v,
            Self::MixLambda => c.mix_lambda = v,
            Self::NumActions => c.num_actions = as_count(v)?,
            Self::N => c.n = as_count(v)?,
            Self::InteractionEta => c.interaction_eta = v,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub var: SweepVar,
    pub grid: Vec<f64>,
    pub replications: usize,
    pub estimators: Vec<String>,
    /// Root seed for data, fold and initialization streams.
    pub seed: u64,
    /// Monte Carlo contexts for the ground-truth value.
    pub truth_mc: usize,
    /// Held-out contexts for learning metrics.
    pub test_size: usize,
    pub propensity: PropensitySource,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            var: SweepVar::R,
            grid: (0..10).map(|i| i as f64 / 10.0).collect(),
            replications: 100,
            estimators: vec!["DM".into(), "IPS".into(), "DR".into(), "DOLCE".into()],
            seed: 20240601,
            truth_mc: 1_000_000,
            test_size: 10_000,
            propensity: PropensitySource::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub nuisance: NuisanceConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            nuisance: NuisanceConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.nuisance.validate()?;
        self.train.validate()?;
        if self.sweep.grid.is_empty() {
            bail!("sweep.grid must not be empty");
        }
        if self.sweep.replications == 0 {
            bail!("sweep.replications must be at least 1");
        }
        if self.sweep.estimators.is_empty() {
            bail!("sweep.estimators must not be empty");
        }
        for v in &self.sweep.grid {
            self.sweep.var.apply(&self.synth, *v).with_context(|| format!("grid value {v}"))?;
        }
        Ok(())
    }

    pub fn ope_estimators(&self) -> Result<Vec<EstimatorKind>> {
        Ok(self.sweep.estimators.iter().map(|s| EstimatorKind::parse(s)).collect::<dolce::Result<_>>()?)
    }

    pub fn opl_estimators(&self) -> Result<Vec<GradientEstimator>> {
        Ok(self.sweep.estimators.iter().map(|s| GradientEstimator::parse(s)).collect::<dolce::Result<_>>()?)
    }

    /// Canonical TOML text of the resolved configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

fn unknown_keys(reference: &Table, given: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (reference.get(k), v) {
            (None, _) => out.push(path),
            (Some(Value::Table(r)), Value::Table(g)) => unknown_keys(r, g, &path, out),
            _ => {}
        }
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_override(item: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = item.split_once('=').ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn nested(path: &[String], value: Value) -> Table {
    let mut t = Table::new();
    if path.len() == 1 {
        t.insert(path[0].clone(), value);
    } else {
        t.insert(path[0].clone(), Value::Table(nested(&path[1..], value)));
    }
    t
}

/// Defaults, then the file at `path`, then each `key=value` override.
/// Unknown keys from every source are reported together.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let reference = Table::try_from(RunConfig::default()).context("serializing defaults")?;
    let mut merged = reference.clone();
    let mut unknown = Vec::new();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
        let file: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
        unknown_keys(&reference, &file, "", &mut unknown);
        merge(&mut merged, file);
    }
    for item in overrides {
        let (key, value) = parse_override(item)?;
        let t = nested(&key, value);
        unknown_keys(&reference, &t, "", &mut unknown);
        merge(&mut merged, t);
    }
    if !unknown.is_empty() {
        bail!("unknown configuration keys: {}", unknown.join(", "));
    }
    let cfg: RunConfig = Value::Table(merged).try_into().context("invalid configuration value")?;
    cfg.validate()?;
    Ok(cfg)
}
