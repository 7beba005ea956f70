mod args;
mod manifest;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use manifest::{Run, RunManifest};
use run::Failure;

fn init_threads(n: u64) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n as usize)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    let run = match cli.command {
        Command::Solve(a) => Run::Solve(a),
        Command::OrderStudy(a) => Run::OrderStudy(a),
        Command::Bench(a) => Run::Bench(a),
        Command::Shadow(a) => Run::Shadow(a),
        Command::Replay(r) => {
            let mut m = RunManifest::read(&r.manifest).map_err(Failure::Usage)?;
            if let Some(dir) = &r.out_dir {
                m.redirect(dir);
            }
            init_threads(m.threads)?;
            return run::execute(&m);
        }
    };
    let m = RunManifest::new(cli.threads, run::resolve(run)?);
    init_threads(m.threads)?;
    run::execute(&m)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
