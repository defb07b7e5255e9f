use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use barrelnet::experiment::{parse_plan, run_matrix, ExperimentPlan, MatrixContext, RunOptions, PRESETS};
use barrelnet::relay::{validate_assignment, Algorithm};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "barrelnet", version, about = "Relay selection and flooding simulation for work-zone barrel networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the algorithm x rate x seed matrix and write CSV results.
    Run {
        #[command(flatten)]
        source: PlanSource,
        /// First seed; the plan's seed count is kept.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-run event logs.
        #[arg(long)]
        emit_events: bool,
    },
    /// Print a relay assignment as CSV.
    Select {
        #[command(flatten)]
        source: PlanSource,
        #[arg(long, default_value = "crns")]
        algorithm: Algorithm,
        /// Seed for the randomized baselines.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check a plan and report connectivity of every algorithm's assignment.
    Validate {
        #[command(flatten)]
        source: PlanSource,
    },
    /// List built-in presets.
    Presets,
}

#[derive(Args)]
struct PlanSource {
    /// TOML plan file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

impl PlanSource {
    fn load(&self) -> Result<ExperimentPlan> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_plan(&text).with_context(|| format!("in {}", path.display()))
            }
            (None, Some(name)) => Ok(ExperimentPlan::preset(name)?),
            (None, None) => Ok(ExperimentPlan::paper()),
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { source, seed, workers, out, emit_events } => {
            let mut plan = source.load()?;
            if let Some(s) = seed {
                plan.rebase_seeds(s);
            }
            if let Some(w) = workers {
                plan.workers = w;
            }
            if let Some(o) = out {
                plan.output_dir = o;
            }
            eprintln!("{plan}");
            let report = run_matrix(&plan, &RunOptions { emit_events })?;
            for s in &report.summaries {
                let pdr = s.pdr.map(|p| format!("{:.1}%", p.mean * 100.0)).unwrap_or_else(|| "-".into());
                println!("{:<7} rate {:<4} pdr {pdr:>7}  relays {:.1}", s.algorithm, s.rate, s.relay_count_mean);
            }
            let failed: Vec<_> = report.failures().collect();
            if !failed.is_empty() {
                for f in &failed {
                    eprintln!("failed {}: {}", f.key.stem(), f.report.as_ref().unwrap_err());
                }
                eprintln!("{} of {} runs failed; see errors.csv", failed.len(), report.outcomes.len());
                return Ok(ExitCode::from(2));
            }
            println!("results in {}", plan.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Select { source, algorithm, seed } => {
            let plan = source.load()?;
            let ctx = MatrixContext::new(&plan)?;
            let assignment = ctx.assignment(algorithm, seed)?;
            print!("{}", assignment.to_csv());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { source } => {
            let plan = source.load()?;
            let ctx = MatrixContext::new(&plan)?;
            println!("{plan}");
            let mut bad = false;
            for &alg in &plan.algorithms {
                let t = ctx.topology(alg);
                match ctx.assignment(alg, plan.seeds[0]) {
                    Ok(a) => {
                        let v = validate_assignment(t, &a);
                        println!(
                            "{alg:<7} range {:>6.1} m  relays {:>3}  isolated {:>3}  violations {}",
                            plan.range_for(alg),
                            v.relay_count,
                            v.isolated.len(),
                            v.violations.len()
                        );
                        bad |= !v.violations.is_empty();
                    }
                    Err(e) => {
                        println!("{alg:<7} error: {e}");
                        bad = true;
                    }
                }
            }
            if bad {
                bail!("plan has invalid assignments");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets => {
            for (name, desc) in PRESETS {
                println!("{name:<8} {desc}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
