use clap::Parser;

fn main() {
    let cli = otms::cli::Cli::parse();
    if let Err(e) = otms::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
