use clap::Parser;

fn main() {
    std::process::exit(popcone::cli::run(popcone::cli::Cli::parse()));
}
