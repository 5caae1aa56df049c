//! `ultra`: command-line runner for the ultrametric library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Opts};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = match Opts::resolve(cli.opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.cmd, &opts) {
        Ok(checks) => {
            let mut ok = true;
            for c in &checks {
                eprintln!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.pass;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
