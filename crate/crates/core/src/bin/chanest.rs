use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chanest::estimators::Method;
use chanest::experiment::{run_convergence_study, run_experiment, ExperimentPlan};
use chanest::oracle::self_check;
use chanest::Result;

#[derive(Parser)]
#[command(name = "chanest", version, about = "Multi-cell massive MIMO channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo drops over all selected estimators; writes CSV tables.
    Run(RunArgs),
    /// Average MF rate versus L-BFGS iterations for four initializations.
    Converge(RunArgs),
    /// Cross-check the estimators against reference computations.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    drops: Option<usize>,
    /// Comma-separated subset, e.g. `ls,pasp,semi_blind`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    workers: Option<usize>,
}

fn load(args: &RunArgs) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(&args.config)?;
    let e = &mut plan.experiment;
    if let Some(out) = &args.out {
        e.out = out.clone();
    }
    if let Some(d) = args.drops {
        e.drops = d;
    }
    if let Some(m) = &args.methods {
        e.methods = m.clone();
    }
    if let Some(w) = args.workers {
        e.workers = w;
    }
    plan.validate()?;
    Ok(plan)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let plan = load(&args)?;
            let table = run_experiment(&plan)?;
            println!(
                "{} records, {} failed estimates, output in {}",
                table.records.len(),
                table.failures.len(),
                plan.experiment.out.display()
            );
            Ok(true)
        }
        Command::Converge(args) => {
            let plan = load(&args)?;
            let report = run_convergence_study(&plan)?;
            println!(
                "{} checkpoints, output in {}",
                report.checkpoints.len(),
                plan.experiment.out.join("converge.csv").display()
            );
            Ok(true)
        }
        Command::Check { seed } => {
            let outcomes = self_check(seed)?;
            for o in &outcomes {
                println!("[{}] {}: {}", if o.passed { "pass" } else { "FAIL" }, o.name, o.detail);
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
