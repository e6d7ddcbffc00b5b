use clap::error::ErrorKind;
use clap::Parser;

use drsc::cli::{run, Cli};
use drsc::Error;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let code = match err {
            Error::Config(_) => 1,
            _ => 2,
        };
        std::process::exit(code);
    }
}
