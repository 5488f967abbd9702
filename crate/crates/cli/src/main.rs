use clap::Parser;

fn main() {
    let cli = rydq_cli::Cli::parse();
    std::process::exit(rydq_cli::run(cli));
}
