fn main() {
    std::process::exit(mspr::cli::run_cli(std::env::args_os()));
}
