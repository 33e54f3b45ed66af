use clap::Parser;

fn main() {
    let cli = reach_under::cli::Cli::parse();
    std::process::exit(reach_under::cli::run(cli));
}
