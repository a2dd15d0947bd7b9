use biodecode_cli::commands::{run_cli, Cli};
use clap::Parser;

fn main() {
    std::process::exit(run_cli(Cli::parse()));
}
