//! File formats, round-state persistence and the command-line driver for
//! `vistrain-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod state;

use cli::{Cli, Command};
use config::RunConfig;
use error::Result;

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let base = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Init(a) => commands::init(a),
        Command::Round(a) => {
            let cfg = a.overrides.apply(base);
            cfg.quality().validate()?;
            let m = commands::round(&cfg, a)?;
            println!("{}", m.state_checksum);
            Ok(())
        }
        Command::Sample(a) => commands::sample(&base, a),
        Command::Eval(a) => commands::eval(a).map(drop),
        Command::MockGt(a) => commands::mock_gt(a),
        Command::MockDump(a) => commands::mock_dump(a),
        Command::DroplossAudit(a) => commands::droploss_audit(&base, a).map(drop),
        Command::Report(a) => {
            let cfg = a.overrides.apply(base);
            cfg.quality().validate()?;
            commands::report(&cfg, a).map(drop)
        }
    }
}
