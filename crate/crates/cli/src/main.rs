use clap::Parser;
use permsel_cli::{main_with, Cli};

fn main() {
    let cli = Cli::parse();
    match main_with(cli) {
        Ok(summary) => {
            print!("{}", summary.report);
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {}", summary.output_dir.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
