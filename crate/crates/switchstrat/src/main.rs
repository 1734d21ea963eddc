use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchstrat::error::{AppError, Result};
use switchstrat::io;
use switchstrat::run::{self, Target};
use switchstrat::RunConfig;

/// Bayesian principal stratification for trials with treatment switching.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail when any R-hat reaches the configured threshold.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct TargetArgs {
    /// Sensitivity parameter of the fit.
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Label of an alternative prior for lambda from the configuration.
    #[arg(long)]
    lambda: Option<String>,
}

impl TargetArgs {
    fn target(&self) -> Target<'_> {
        Target { kappa: self.kappa, lambda: self.lambda.as_deref() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trial and write data.csv and truth.csv.
    Generate,
    /// Run the chains for one kappa and write draws and diagnostics.
    Fit(TargetArgs),
    /// Summarize causal estimands from saved draws.
    Estimands(TargetArgs),
    /// Posterior predictive checks for a kappa = 0 fit.
    Ppc(TargetArgs),
    /// Recompute the posterior summary table and R-hat from saved draws.
    Diagnose(TargetArgs),
    /// Fit and summarize over the kappa grid and the lambda prior variants.
    Sensitivity,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_toml(&io::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(AppError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Generate => {
            for path in run::cmd_generate(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Fit(t) => {
            let out = run::cmd_fit(&cfg, t.target(), cli.strict)?;
            println!("{}", out.dir.display());
            for (p, s) in &out.table {
                let rhat = s.rhat.map_or("-".into(), |r| format!("{r:.3}"));
                println!("{:<12} mean {:>9.4}  95% [{:>9.4}, {:>9.4}]  rhat {rhat}", p.name(), s.mean, s.q025, s.q975);
            }
        }
        Command::Estimands(t) => {
            let rows = run::cmd_estimands(&cfg, t.target())?;
            println!("{} rows written to {}", rows.len(), t.target().dir(&cfg).join("curves.csv").display());
        }
        Command::Ppc(t) => {
            let report = run::cmd_ppc(&cfg, t.target())?;
            for r in &report.rows {
                let p = r.pppv.map_or("undefined".into(), |p| format!("{p:.3}"));
                println!("{:<10} {:<16} {p}", r.discrepancy, r.group);
            }
        }
        Command::Diagnose(t) => {
            for (p, s) in run::cmd_diagnose(&cfg, t.target(), cli.strict)? {
                let rhat = s.rhat.map_or("-".into(), |r| format!("{r:.3}"));
                println!("{:<12} rhat {rhat}", p.name());
            }
        }
        Command::Sensitivity => {
            for dir in run::cmd_sensitivity(&cfg, cli.strict)? {
                println!("{}", dir.display());
            }
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
