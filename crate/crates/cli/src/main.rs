use std::process::ExitCode;

use clap::Parser;
use infogeo_cli::args::Cli;
use infogeo_cli::{emit, execute, report};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.command {
        infogeo_cli::args::Command::Analyze(a) => a.out.clone(),
        infogeo_cli::args::Command::Verify(a) => a.out.clone(),
        infogeo_cli::args::Command::Reduce(a) => a.out.clone(),
        infogeo_cli::args::Command::Optimize(a) => a.out.clone(),
    };
    let result = execute(&cli.command).and_then(|o| {
        emit(&report::render(o.report), out.as_deref())?;
        Ok(o.exit)
    });
    match result {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("infogeo: {e}");
            ExitCode::from(e.exit() as u8)
        }
    }
}
