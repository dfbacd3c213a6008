use clap::Parser;

fn main() {
    let cli = mixed_search::cli::Cli::parse();
    if let Err(e) = mixed_search::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
