use clap::Parser;

use aggcast_engine::cli;

fn main() {
    let args = cli::Cli::parse();
    if let Err(err) = cli::run(args) {
        eprintln!("error: {err}");
        std::process::exit(cli::exit_code(&err));
    }
}
