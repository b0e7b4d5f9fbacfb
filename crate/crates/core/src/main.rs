use clap::Parser;

use bundlefactor::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
