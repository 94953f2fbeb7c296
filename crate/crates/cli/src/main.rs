use clap::Parser;
use ocpdl_cli::{run_cli, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(run_cli(Cli::parse()));
}
