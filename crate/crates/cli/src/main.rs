use clap::Parser;
use ritrace_cli::{exit_code, run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("ri-tracer: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
