use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mde::experiment::{manifest_config, normality_study, rates_study, run, ExperimentConfig, ExperimentKind, RunOutcome};
use mde::Error;

#[derive(Parser)]
#[command(name = "mde", version, about = "Minimum distance estimation for multiscale diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment from a config file or a manifest.json.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replication count (overrides `replications`).
        #[arg(long)]
        reps: Option<usize>,
        /// Master seed (overrides `master_seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Convergence-rate ladders.
    Rates {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram of scaled estimates against the limit law.
    Normality {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Config or manifest at `path`; a `.json` path is read as a manifest.
fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let is_manifest = path.extension().is_some_and(|e| e == "json");
    let loaded = if is_manifest { manifest_config(path, None) } else { ExperimentConfig::load(path) };
    loaded.map_err(|e| match e {
        Error::Io(io) => Error::Config { line: 0, msg: format!("{}: {io}", path.display()) },
        other => other,
    })
}

fn apply(
    mut c: ExperimentConfig,
    out: Option<PathBuf>,
    reps: Option<usize>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, Error> {
    if let Some(o) = out {
        c.output_dir = o;
    }
    if let Some(r) = reps {
        if r == 0 {
            return Err(Error::Config { line: 0, msg: "--reps must be at least 1".into() });
        }
        c.replications = r;
    }
    if let Some(s) = seed {
        c.master_seed = s;
    }
    Ok(c)
}

fn report(o: &RunOutcome) {
    let s = &o.summary;
    println!("{}: {} replications -> {}", s.experiment, s.replications, o.out_dir.display());
    println!(
        "  converged {} / failed {} / not converged {}",
        s.converged.count, s.failed_count, s.not_converged_count
    );
    if !s.converged.mean.is_empty() {
        println!("  mean {:?}  std {:?}", s.converged.mean, s.converged.std);
    }
    if let Some(r) = &s.reference {
        println!("  reference {r:?}");
    }
    if let Some(n) = &s.normality {
        println!(
            "  sqrt(T)(theta_hat - theta0): mean {:.4}, variance {:.4} (predicted {:.4})",
            n.sample_mean, n.sample_variance, n.predicted_variance
        );
    }
}

fn execute(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run { config, out, reps, seed, threads } => {
            let c = apply(load(&config)?, out, reps, seed)?;
            if c.experiment == ExperimentKind::Rates {
                return execute_rates(c);
            }
            let o = run(&c, threads)?;
            report(&o);
            Ok(o.exit_code())
        }
        Command::Rates { config, out } => execute_rates(apply(load(&config)?, out, None, None)?),
        Command::Normality { config, out, reps, seed, threads } => {
            let c = apply(load(&config)?, out, reps, seed)?;
            if c.experiment != ExperimentKind::Normality {
                return Err(Error::Config {
                    line: 0,
                    msg: format!("`mde normality` needs experiment = normality, got {}", c.experiment),
                });
            }
            let o = normality_study(&c, threads)?;
            report(&o);
            Ok(o.exit_code())
        }
    }
}

fn execute_rates(c: ExperimentConfig) -> Result<i32, Error> {
    if c.experiment != ExperimentKind::Rates {
        return Err(Error::Config {
            line: 0,
            msg: format!("`mde rates` needs experiment = rates, got {}", c.experiment),
        });
    }
    let r = rates_study(&c)?;
    println!("rates -> {}", c.output_dir.display());
    println!("  cf_gap fitted slope {:.3}", r.cf.fitted_slope);
    println!("  oscillatory_gap fitted slope {:.3}", r.oscillatory.fitted_slope);
    println!("  first-order bound holds at every eps: {}", r.bound.iter().all(|b| b.holds));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
