use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use clipwave::experiment::{run_with, RunOptions};
use clipwave::queue;
use clipwave::rates::{self, fit_rate, Sweep};
use clipwave::records::{self, RecordWriter, RATES_FILE, RECORDS_FILE};
use clipwave::sweep::{run_sweep, SweepGrid};
use clipwave::{selftest, ExperimentConfig};
use clipwave_core::wavelet::HaarBasis;

#[derive(Parser)]
#[command(name = "clipwave", version, about = "Clipped online wavelet regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration with one seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Directory receiving records.csv and the run summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-round regret curves.
        #[arg(long)]
        trace: bool,
        /// Checkpoint file, resumed when it exists.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1000, requires = "checkpoint")]
        checkpoint_every: u64,
    },
    /// Run a grid of horizons or noise levels over seeds 0..n.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        /// `T=256,1024,...` or `sigma=0.25,0.5,...`
        #[arg(long)]
        grid: SweepGrid,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit the log-log rate of the records in a directory.
    Rates {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sweep: Sweep,
    },
    /// Verify the Haar basis identities.
    CheckBasis,
    /// Run the invariant suite.
    Selftest,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            trace,
            checkpoint,
            checkpoint_every,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let options = RunOptions {
                trace,
                checkpoint: checkpoint.clone(),
                checkpoint_every: checkpoint.as_ref().map(|_| checkpoint_every),
                ..RunOptions::default()
            };
            let outcome = run_with(&cfg, seed, &options)?;
            let r = &outcome.record;
            println!(
                "T={} sigma={} seed={} risk={:.6e} regret={:.4} experts={} clipped={} ms={}",
                r.horizon, r.sigma, r.seed, r.risk, r.regret, r.experts, outcome.clipped, r.ms
            );
            if let Some(ratio) = outcome.bound_ratio {
                println!("average regret / rate main term = {ratio:.4}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                RecordWriter::append(&dir.join(RECORDS_FILE))?.write(r)?;
                let stem = format!("run-{}-{}", &r.config_digest[..12], seed);
                let summary = serde_json::json!({
                    "record": r,
                    "clipped": outcome.clipped,
                    "bound_ratio": outcome.bound_ratio,
                    "within_bound_constant": outcome.within_bound_constant,
                });
                std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&summary)? + "\n")?;
                if let Ok(curves) = outcome.regret_accounting() {
                    curves.write_csv(&dir.join(format!("{stem}-regret.csv")))?;
                }
            }
            if let Some(path) = checkpoint {
                let _ = std::fs::remove_file(path);
            }
            Ok(outcome.within_bound_constant != Some(false))
        }
        Command::Sweep {
            config,
            seeds,
            grid,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let threads = queue::thread_count();
            eprintln!("running {} seeds on {threads} threads", seeds);
            let recs = run_sweep(&cfg, &grid, seeds, threads, Some(&out))?;
            let swept = match grid {
                SweepGrid::Horizon(_) => Sweep::Horizon,
                SweepGrid::Sigma(_) => Sweep::Sigma2,
            };
            for (x, m, n) in rates::medians(&recs, swept) {
                println!("{swept}={x}  median risk {m:.6e}  ({n} seeds)");
            }
            println!("wrote {}", out.join(RECORDS_FILE).display());
            Ok(true)
        }
        Command::Rates { input, sweep } => {
            let recs = records::read_records(&input.join(RECORDS_FILE))?;
            let fit = fit_rate(&recs, sweep)?;
            records::write_rates(&input.join(RATES_FILE), &fit)?;
            println!(
                "slope {:.4} ± {:.4}  intercept {:.4}  r2 {:.4}  points {}",
                fit.slope, fit.stderr, fit.intercept, fit.r2, fit.n_points
            );
            Ok(true)
        }
        Command::CheckBasis => {
            let mut ok = true;
            for d in [1, 2] {
                let report = HaarBasis::new(d)?.check_regularity(1e-12);
                for c in &report.checks {
                    println!("d={d} {:<40} residual {:.3e} {}", c.name, c.residual, verdict(c.passed));
                }
                ok &= report.passed();
            }
            Ok(ok)
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{:<24} {}  {}", c.name, verdict(c.passed), c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} checks failed");
            }
            Ok(true)
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}
