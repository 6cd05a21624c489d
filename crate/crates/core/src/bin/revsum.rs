fn main() {
    std::process::exit(revsum::cli::run_cli(std::env::args_os()));
}
