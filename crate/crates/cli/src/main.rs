// `!(a > b)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{cmd_solve, cmd_sweep, EX_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EX_USAGE } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match outcome {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            println!("{}", o.summary);
            ExitCode::from(o.code)
        }
        Err(e) => {
            eprintln!("sepo: error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
