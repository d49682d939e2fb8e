// negated comparisons double as NaN rejection
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use run::Failure;

/// Layer solutions of nonlocal Allen-Cahn equations: solve, fit decay rates,
/// and certify the ingredients used to bound them.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); see `emit-template`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the randomized checks.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Minimize the energy on the window; writes profile, ledger and summary.
    Solve,
    /// Solve, then fit tail and derivative exponents and check the well bounds.
    Decay,
    /// Solve, then tabulate E(u; [-rho, rho]) against the growth gauge.
    EnergyGrowth,
    /// Build and certify the radial barrier.
    Barrier,
    /// Admissibility of the kernel and the min/max energy inequality.
    KernelCheck,
    /// Far-field behaviour of the operator on a power-tailed test profile.
    Asymptotics,
    /// Print a commented config with every default.
    EmitTemplate,
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if let Command::EmitTemplate = cli.command {
        print!("{}", config::TEMPLATE);
        return Ok(());
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = config::load(path).map_err(Failure::Config)?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Hard(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.out)?;
    let out = cfg.out.clone();
    match cli.command {
        Command::Solve => run::solve(&cfg, &out),
        Command::Decay => run::decay(&cfg, &out, cli.seed),
        Command::EnergyGrowth => run::energy_growth(&cfg, &out),
        Command::Barrier => run::barrier(&cfg, &out),
        Command::KernelCheck => run::kernel_check(&cfg, &out, cli.seed),
        Command::Asymptotics => run::asymptotics(&cfg, &out),
        Command::EmitTemplate => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap uses 2 for usage errors, which is taken by non-convergence
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
