use clap::Parser;
use hardy_approx::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
