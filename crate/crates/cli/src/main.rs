use clap::Parser;

fn main() {
    let args = hamcurv_cli::Args::parse();
    std::process::exit(hamcurv_cli::run(&args));
}
