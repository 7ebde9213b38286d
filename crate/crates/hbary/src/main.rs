use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hbary::commands::{cmd_barycenter, cmd_diagnose, cmd_equivalence, cmd_sample, cmd_sweep};
use hbary::error::{CliError, CliResult};
use hbary::RunConfig;

#[derive(Parser)]
#[command(name = "hbary", version, about = "h-Wasserstein barycenters of discrete measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Threads for cost tensor assembly.
    #[arg(long)]
    threads: Option<usize>,
    /// Run seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and write the plan, potentials and barycenter measure.
    Barycenter(Common),
    /// Compare the multi-marginal value with the coupled two-marginal objective.
    Equivalence(Common),
    /// Run the diagnostics on a solved or saved plan.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Saved plan to check instead of solving.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Saved potentials to go with `--plan`.
        #[arg(long)]
        potentials: Option<PathBuf>,
    },
    /// Solve at several sample sizes and tabulate the diagnostics.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sample sizes; overrides the config.
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<usize>>,
    },
    /// Write the configured marginals as JSON and CSV measures.
    Sample(Common),
}

fn load(common: &Common) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        cfg.threads = Some(t);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli, out_slot: &mut Option<PathBuf>) -> CliResult<()> {
    match cli.command {
        Command::Barycenter(c) => {
            let (cfg, out) = load(&c)?;
            *out_slot = Some(out.clone());
            let s = cmd_barycenter(&cfg, &out)?;
            println!("value {} support {} barycenter atoms {}", s.value, s.support_size, s.barycenter_atoms);
        }
        Command::Equivalence(c) => {
            let (cfg, out) = load(&c)?;
            *out_slot = Some(out.clone());
            let s = cmd_equivalence(&cfg, &out)?;
            println!("c_mm {} c2m {} glued {} threshold {}", s.c_mm, s.c2m, s.glued, s.threshold);
        }
        Command::Diagnose { common, plan, potentials } => {
            let (mut cfg, out) = load(&common)?;
            *out_slot = Some(out.clone());
            if plan.is_some() {
                cfg.plan = plan;
            }
            if potentials.is_some() {
                cfg.potentials = potentials;
            }
            let r = cmd_diagnose(&cfg, &out)?;
            println!("all exact checks passed; value {} support {}", r.value, r.support_size);
        }
        Command::Sweep { common, resolutions } => {
            let (mut cfg, out) = load(&common)?;
            *out_slot = Some(out.clone());
            if let Some(r) = resolutions {
                cfg.resolutions = r;
            }
            let rows = cmd_sweep(&cfg, &out)?;
            println!("{} resolutions written to {}", rows.len(), out.join("sweep.csv").display());
        }
        Command::Sample(c) => {
            let (cfg, out) = load(&c)?;
            *out_slot = Some(out.clone());
            let ms = cmd_sample(&cfg, &out)?;
            println!("{} measures written to {}", ms.len(), out.display());
        }
    }
    Ok(())
}

fn write_error(out: Option<&Path>, err: &CliError) {
    let json = serde_json::to_string(&err.report()).expect("plain struct");
    eprintln!("{json}");
    if let Some(dir) = out {
        if dir.is_dir() {
            let _ = std::fs::write(dir.join("error.json"), format!("{json}\n"));
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = None;
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            write_error(out.as_deref(), &e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
