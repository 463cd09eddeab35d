use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rerm_core::error::RermError;
use rerm_core::experiment::{run_experiment, ExperimentConfig};
use rerm_core::problem_file::ProblemSpec;
use rerm_core::program::SolveStatus;
use rerm_core::rerm::{build, solve_program};
use rerm_core::solver::SolverSettings;
use rerm_core::par::Exec;

#[derive(Parser)]
#[command(name = "rerm", version, about = "Robust empirical risk minimization over uncertainty sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file against a CSV dataset and print the solution as JSON.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the conic program as JSON.
        #[arg(long)]
        dump_program: Option<PathBuf>,
        /// Absolute and relative solver tolerance.
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the synthetic hidden-location experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &RermError) -> u8 {
    match e {
        RermError::EmptySet { .. } | RermError::UnboundedSet { .. } | RermError::Unbounded { .. } => EXIT_INFEASIBLE,
        RermError::Solver {
            status: SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible,
            ..
        } => EXIT_INFEASIBLE,
        RermError::Solver { .. } => EXIT_NUMERICAL,
        _ => EXIT_ERROR,
    }
}

fn solve(
    problem: PathBuf,
    data: PathBuf,
    dump_program: Option<PathBuf>,
    eps: f64,
    max_iter: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), RermError> {
    let spec = ProblemSpec::load(&problem)?;
    let dataset = spec.load_data(&data)?;
    let p = spec.to_problem(&dataset)?;
    for w in p.warnings() {
        eprintln!("warning: {w}");
    }
    let prog = build(&p)?;
    if let Some(path) = dump_program {
        std::fs::write(path, prog.to_json())?;
    }
    let mut settings = SolverSettings {
        eps_abs: eps,
        eps_rel: eps,
        ..SolverSettings::default()
    };
    if let Some(n) = max_iter {
        settings.max_iter = n;
    }
    let sol = solve_program(&p, &prog, &settings, Exec::default())?;
    let json = serde_json::to_string_pretty(&sol)? + "\n";
    match out {
        Some(path) => std::fs::write(path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn experiment(config: PathBuf, out: PathBuf) -> Result<(), RermError> {
    let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
    let result = run_experiment(&cfg)?;
    result.write(&out)?;
    for f in &result.summary.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    for (name, s) in &result.summary.methods {
        println!(
            "{name:<20} mse {:>12.4}  excess {:>10.4} +- {:.4}  ({} seeds)",
            s.mean_mse, s.mean_excess, s.stderr_excess, s.runs
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            problem,
            data,
            dump_program,
            eps,
            max_iter,
            out,
        } => solve(problem, data, dump_program, eps, max_iter, out),
        Command::Experiment { config, out } => experiment(config, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
