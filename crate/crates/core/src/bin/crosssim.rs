use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crosssim::harness::{report, ExperimentPlan, Figure, Pipeline, Stage, Store};
use crosssim::Error;

const EXIT_PARTIAL: u8 = 2;
const EXIT_INVALID_PLAN: u8 = 3;

#[derive(Parser)]
#[command(name = "crosssim", version, about = "Run, score and triangulate quench simulation plans")]
struct Cli {
    /// Plan file (TOML, version 1).
    #[arg(long, global = true)]
    plan: Option<PathBuf>,
    /// Master seed; overrides the plan's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Result store directory; overrides the plan's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and store the coupling instances.
    Gen,
    /// Run every engine's quench (generating instances as needed).
    Evolve,
    /// Measure correlation matrices (running earlier stages as needed).
    Measure,
    /// Score every engine against the exact engine into `summary/scores.csv`.
    Score,
    /// Triangulate tensor-network errors against the noisy references.
    Triangulate,
    /// Write plot-ready tables from a completed store.
    Report {
        /// Figures to write; all of them when omitted.
        #[arg(long = "figure")]
        figures: Vec<String>,
    },
}

fn load_plan(cli: &Cli) -> Result<ExperimentPlan, Error> {
    let path = cli
        .plan
        .as_ref()
        .ok_or_else(|| Error::InvalidPlan("--plan is required".into()))?;
    let mut plan = ExperimentPlan::load(path)?;
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    if let Some(out) = &cli.out {
        plan.output_dir = out.clone();
    }
    Ok(plan)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let plan = load_plan(cli)?;
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let store = Store::open(&plan.output_dir)?;
    let pipeline = Pipeline::new(&plan, store.clone(), workers)?;
    let stage = match &cli.command {
        Command::Gen => Stage::Gen,
        Command::Evolve => Stage::Evolve,
        Command::Measure => Stage::Measure,
        Command::Score => Stage::Score,
        Command::Triangulate => Stage::Triangulate,
        Command::Report { figures } => {
            let figures: Vec<Figure> = if figures.is_empty() {
                Figure::ALL.to_vec()
            } else {
                figures.iter().map(|f| f.parse()).collect::<Result<_, _>>()?
            };
            let mut status = 0;
            for figure in figures {
                match report(pipeline.layout(), &store, figure) {
                    Ok(path) => println!("{}", path.display()),
                    Err(Error::MissingCells(names)) => {
                        eprintln!("{figure}: {} missing", names.len());
                        for n in names {
                            eprintln!("  missing {n}");
                        }
                        status = EXIT_PARTIAL;
                    }
                    Err(e) => return Err(e),
                }
            }
            return Ok(status);
        }
    };
    let summary = pipeline.run(stage)?;
    eprintln!(
        "computed {}, skipped {}, failed {}",
        summary.computed,
        summary.skipped,
        summary.failures.len()
    );
    for f in &summary.failures {
        eprintln!("  {}: {}", f.job, f.message);
    }
    Ok(if summary.failures.is_empty() { 0 } else { EXIT_PARTIAL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::InvalidPlan(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID_PLAN)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
