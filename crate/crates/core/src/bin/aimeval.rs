use clap::Parser;

fn main() {
    let cli = aimeval::cli::Cli::parse();
    if let Err(e) = aimeval::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
