use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use mulgen::cli::{run, CliRequest, ExitStatus};

fn main() -> ExitCode {
    let req = match CliRequest::try_parse() {
        Ok(req) => req,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(ExitStatus::Usage.code() as u8);
        }
    };
    let status = run(&req, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(status.code() as u8)
}
