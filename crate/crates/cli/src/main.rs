use clap::Parser;
use sib_cli::{run, Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return;
        }
        Err(err) => {
            let _ = err.print();
            let wrapped = CliError::Config(err.kind().to_string());
            eprintln!("{}", wrapped.to_json());
            std::process::exit(wrapped.exit_code());
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.exit_code());
    }
}
