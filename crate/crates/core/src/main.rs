use clap::Parser;

fn main() {
    let cli = hiercubes::cli::Cli::parse();
    std::process::exit(hiercubes::cli::run(cli));
}
