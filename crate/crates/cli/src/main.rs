use clap::Parser;

fn main() {
    let cli = rer_cli::Cli::parse();
    if let Err(e) = rer_cli::run(&cli) {
        eprintln!("rer: {e}");
        std::process::exit(e.exit_code());
    }
}
