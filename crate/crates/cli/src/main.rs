use clap::Parser;

fn main() {
    let cli = sglab_cli::Cli::parse();
    if let Err(e) = sglab_cli::run(cli) {
        eprintln!("sglab: {e}");
        std::process::exit(e.exit_code());
    }
}
