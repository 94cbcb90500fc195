use clap::Parser;
use tape_lab::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("tape-lab: {e}");
        std::process::exit(e.exit_code());
    }
}
