use clap::Parser;

fn main() {
    let cli = cmqe::Cli::parse();
    if let Err(e) = cmqe::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
