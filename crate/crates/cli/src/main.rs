use clap::Parser;
use tracelab_cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(report) => {
            println!("{}", report.csv.display());
            println!("{}", report.svg.display());
            println!("{}", report.manifest.display());
        }
        Err(e) => {
            eprintln!("tracelab: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
