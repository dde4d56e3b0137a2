mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, EvalCommand, GraphCommand, KernelCommand, ReconstructCommand};
use commands::AllTrialsFailed;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Graph(GraphCommand::Gen(a)) => commands::graph_gen(a.resolve()?),
        Command::Graph(GraphCommand::Validate(a)) => commands::graph_validate(a.resolve()?),
        Command::Kernel(KernelCommand::Build(a)) => commands::kernel_build(a.resolve()?),
        Command::Reconstruct(ReconstructCommand::Static(a)) => commands::reconstruct_static(a.resolve()?),
        Command::Reconstruct(ReconstructCommand::Batch(a)) => commands::reconstruct_series(a.resolve()?, false),
        Command::Reconstruct(ReconstructCommand::Online(a)) => commands::reconstruct_series(a.resolve()?, true),
        Command::Simulate(a) => commands::simulate(a),
        Command::Eval(EvalCommand::Nmse(a)) => commands::eval_nmse(a.resolve()?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AllTrialsFailed>().is_some() {
        return EXIT_NUMERICAL;
    }
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<graphkernel::Error>())
        .any(|e| e.is_numerical());
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
