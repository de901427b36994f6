use clap::Parser;

use fracbubble_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("fracbubble: {e}");
        std::process::exit(e.exit_code());
    }
}
