use clap::Parser;

fn main() {
    let args = cilqr::cli::Args::parse();
    std::process::exit(cilqr::cli::run(&args));
}
