use clap::Parser;

fn main() {
    let cli = pmtlab::cli::Cli::parse();
    if let Err(e) = pmtlab::cli::run(cli) {
        eprintln!("pmtlab: {e}");
        std::process::exit(e.exit_code());
    }
}
