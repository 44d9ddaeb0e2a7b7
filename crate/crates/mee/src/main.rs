use clap::Parser;
use hmm_mee::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("hmm-mee: {e}");
        std::process::exit(e.exit_code());
    }
}
