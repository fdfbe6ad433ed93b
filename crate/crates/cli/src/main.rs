//! `clanwalk`: runs one experiment from a TOML config and writes CSVs, a
//! manifest and gnuplot scripts into the output directory.
//!
//! Exit codes: 0 success, 2 bad config or arguments, 3 unmet
//! precondition, 4 non-convergence or exhausted budget, 5 failed audit,
//! 1 anything else.

mod config;
mod manifest;
mod plots;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use manifest::Manifest;
use run::AuditFailure;

#[derive(Parser)]
#[command(
    name = "clanwalk",
    version,
    about = "Conditioned asymmetric random walks: experiments and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replica count.
    #[arg(long)]
    replicas: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Checks the kernel and reports β, escape probability, β_d, β₁ and ρ̂_c.
    Validate(Common),
    /// Tabulates escape probabilities and zero-pattern oracles.
    Oracle(Common),
    /// Estimates the hitting-time survival curve and its decay rate.
    Tau(Common),
    /// Compares conditioned slices with their limit.
    Yaglom(Common),
    /// Samples projected clans of ancestors.
    Clans(Common),
    /// Trims for a μ-mode initial law.
    Mu(Common),
    /// Audits coupled slices for domination and monotonicity.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Audits this slice file instead of sampling a new batch.
        #[arg(long)]
        slices: Option<PathBuf>,
    },
    /// Writes gnuplot scripts for the CSVs already in a directory.
    Plots {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(c: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.replicas {
        if n == 0 {
            return Err(ConfigError("--replicas must be positive".into()).into());
        }
        cfg.replicas = n;
    }
    if let Some(o) = &c.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn execute(
    name: &str,
    c: &Common,
    f: impl FnOnce(&ExperimentConfig, &Path, &mut Manifest) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let cfg = load(c)?;
    let out = cfg.output.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut m = Manifest::new(name, &cfg);
    let result = f(&cfg, &out, &mut m);
    if let Err(e) = &result {
        m.set("status", format!("error: {e}"));
    } else {
        m.set("status", "ok");
    }
    m.write(&out)?;
    // Scripts are optional output; a run without plottable CSVs is fine.
    let _ = plots::emit_plots(&out);
    result
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate(c) => execute("validate", &c, |cfg, _, m| run::validate(cfg, m)),
        Command::Oracle(c) => execute("oracle", &c, run::oracle),
        Command::Tau(c) => execute("tau", &c, run::tau),
        Command::Yaglom(c) => execute("yaglom", &c, run::yaglom),
        Command::Clans(c) => execute("clans", &c, run::clans),
        Command::Mu(c) => execute("mu", &c, run::mu),
        Command::Audit { common, slices } => execute("audit", &common, |cfg, out, m| {
            run::audit(cfg, out, slices.as_deref(), m)
        }),
        Command::Plots { out } => {
            for p in plots::emit_plots(&out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use clanwalk_core::Error;
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if e.downcast_ref::<AuditFailure>().is_some() {
        return 5;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidKernel(_) | Error::InvalidArgument(_)) => 2,
        Some(Error::Precondition(_)) => 3,
        Some(Error::NonConvergence(_) | Error::BudgetExceeded(_)) => 4,
        Some(Error::Invariant(_)) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("CLANWALK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
