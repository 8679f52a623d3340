use clap::Parser;

fn main() -> anyhow::Result<()> {
    infopres::cli::run(&infopres::cli::Cli::parse())
}
