fn main() {
    std::process::exit(specdist::cli::run_cli(std::env::args_os()));
}
