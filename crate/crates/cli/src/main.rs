//! Command-line driver for the micro-macro solvers.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 numerical failure.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{value_parser, Arg, ArgAction, Command};

use config::{keys_for, parse_config, COMMANDS};
use run::RunError;

fn about(command: &str) -> &'static str {
    match command {
        "shear" => "1D Couette flow with CONNFFESSIT or closed-form stress",
        "homogeneous" => "constitutive model under a constant velocity gradient",
        "fokker-planck" => "relaxation of a 2D configuration density",
        "pgd" => "greedy rank-1 solver for the Poisson problem on the unit square",
        "rb-offline" => "greedy selection of reduced-basis control variates",
        "rb-online" => "control-variate estimates with a stored reduced basis",
        "variance-study" => "compares Brownian correlation strategies across cells",
        _ => "measures convergence orders in δt, Δy and K",
    }
}

fn cli() -> Command {
    let mut app = Command::new("micromacro")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Micro-macro simulation of dilute polymer solutions")
        .subcommand_required(true)
        .arg(Arg::new("config").long("config").global(true).value_parser(value_parser!(PathBuf)).help("flat TOML file of parameters"))
        .arg(Arg::new("seed").long("seed").global(true).value_parser(value_parser!(u64)).help("root seed [default: 0]"))
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_parser(value_parser!(usize))
                .help("worker threads; results do not depend on it"),
        )
        .arg(Arg::new("out").long("out").global(true).value_parser(value_parser!(PathBuf)).help("output directory [default: out]"));
    for cmd in COMMANDS {
        let mut sub = Command::new(cmd).about(about(cmd));
        for key in keys_for(cmd) {
            sub = sub.arg(Arg::new(key.name).long(key.flag()).action(ArgAction::Set).help(key.help));
        }
        app = app.subcommand(sub);
    }
    app
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (command, sub) = matches.subcommand().expect("subcommand is required");
    let threads = sub.get_one::<usize>("threads").copied();
    let cfg = match parse_config(command, sub.get_one::<PathBuf>("config").map(|p| p.as_path()), sub, sub.get_one::<u64>("seed").copied()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: range error: threads = 0 violates threads ≥ 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let out = sub.get_one::<PathBuf>("out").cloned().unwrap_or_else(|| PathBuf::from("out"));
    let start = Instant::now();
    let tables = match run::dispatch(&cfg) {
        Ok(t) => t,
        Err(RunError::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(RunError::Io(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
        Err(RunError::Core(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match output::emit_results(&out, &cfg, &tables, rayon::current_num_threads(), start.elapsed()) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Parameter problems detected inside a solver count as configuration
/// errors; everything else is a numerical failure.
fn exit_code(e: &micromacro::Error) -> u8 {
    use micromacro::Error::*;
    match e {
        InvalidParameter { .. } | StabilityBound { .. } | OutOfRegime(_) | EmptyTrialSet => 2,
        Io { .. } => 1,
        _ => 3,
    }
}
