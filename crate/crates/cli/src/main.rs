use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use dolce_cli::config::{load, RunConfig};
use dolce_cli::output::{CsvTable, Manifest};
use dolce_cli::{estimate, ope, opl, oracle_check};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "dolce", version, about = "Lag-aware off-policy evaluation and learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set sweep.replications=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Root seed; replaces `sweep.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut ov = self.overrides.clone();
        if let Some(s) = self.seed {
            ov.push(format!("sweep.seed={s}"));
        }
        load(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluation sweep on the synthetic benchmark.
    SynthOpe(Common),
    /// Learning sweep on the synthetic benchmark.
    SynthOpl(Common),
    /// Estimate a policy's value on a logged dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Logged data CSV.
        #[arg(long)]
        data: PathBuf,
        /// Policy spec JSON.
        #[arg(long)]
        policy: PathBuf,
    },
    /// Exact identity checks on fixture environments.
    OracleCheck {
        /// Directory of fixture JSON files.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Random environments to add; defaults to 100 when no directory is given.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the random fixtures plus the zero-overlap fixture here and exit.
        #[arg(long)]
        write_fixtures: Option<PathBuf>,
    },
}

fn write_outputs(dir: &Path, command: &str, cfg: &RunConfig, tables: &[(&str, CsvTable)], extra: &[&str]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut outputs: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    for (name, t) in tables {
        t.write(&dir.join(name))?;
        outputs.push(name.to_string());
    }
    Manifest {
        command,
        config_hash: cfg.hash(),
        config: cfg.canonical(),
        outputs,
        version: env!("CARGO_PKG_VERSION"),
    }
    .write(dir)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::SynthOpe(c) => {
            let cfg = c.config()?;
            let out = ope::run(&cfg, c.jobs)?;
            let summary = ope::summary_table(&cfg, &out);
            print!("{}", summary.to_text());
            write_outputs(
                &c.out,
                "synth-ope",
                &cfg,
                &[("ope_summary.csv", summary), ("ope_replications.csv", ope::replication_table(&cfg, &out))],
                &[],
            )?;
        }
        Command::SynthOpl(c) => {
            let cfg = c.config()?;
            let out = opl::run(&cfg, c.jobs)?;
            let summary = opl::summary_table(&cfg, &out);
            print!("{}", summary.to_text());
            write_outputs(
                &c.out,
                "synth-opl",
                &cfg,
                &[
                    ("opl_summary.csv", summary),
                    ("opl_replications.csv", opl::replication_table(&cfg, &out)),
                    ("opl_trajectories.csv", opl::trajectory_table(&cfg, &out)),
                ],
                &[],
            )?;
        }
        Command::Estimate { common, data, policy } => {
            let cfg = common.config()?;
            let pol = estimate::load_policy(&policy)?;
            let ds = estimate::load_dataset(&data, &pol)?;
            let out = estimate::run(&ds, &pol, &cfg.nuisance, cfg.sweep.propensity, cfg.sweep.seed)?;
            let table = estimate::estimates_table(&out, &cfg.hash());
            print!("{}", table.to_text());
            for w in &out.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(
                common.out.join("diagnostics.json"),
                serde_json::to_string_pretty(&out.diagnostics)? + "\n",
            )?;
            write_outputs(&common.out, "estimate", &cfg, &[("estimates.csv", table)], &["diagnostics.json"])?;
        }
        Command::OracleCheck { fixtures, random, seed, write_fixtures } => {
            let n_random = random.unwrap_or(if fixtures.is_some() { 0 } else { 100 });
            let mut fx: Vec<_> = (0..n_random as u64).map(|i| oracle_check::fixture_from_seed(seed.wrapping_add(i))).collect();
            if let Some(dir) = write_fixtures {
                fx.push(oracle_check::zero_lag_overlap_fixture());
                oracle_check::write_fixtures(&dir, &fx)?;
                println!("wrote {} fixtures to {}", fx.len(), dir.display());
                return Ok(());
            }
            if let Some(dir) = &fixtures {
                fx.extend(oracle_check::load_fixtures(dir)?);
            }
            if fx.is_empty() {
                bail!("no fixtures to check");
            }
            let results = oracle_check::run(&fx, seed)?;
            let summary = oracle_check::summarize(&results);
            print!("{}", oracle_check::summary_table(&summary).to_text());
            for r in &results {
                for c in r.checks.iter().filter(|c| !c.passed()) {
                    eprintln!("FAIL {} {}: residual {} tolerance {}", r.fixture, c.name, c.residual, c.tolerance);
                }
            }
            let failures: usize = summary.iter().map(|s| s.failures).sum();
            if failures > 0 {
                bail!("{failures} identity checks failed over {} fixtures", fx.len());
            }
            println!("all identities hold over {} fixtures", fx.len());
        }
    }
    Ok(())
}
