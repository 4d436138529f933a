use clap::Parser;

fn main() {
    let args = gnmk::cli::Args::parse();
    std::process::exit(gnmk::cli::execute(&args));
}
