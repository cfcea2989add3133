fn main() {
    std::process::exit(dlstf_cli::run_cli(std::env::args_os()));
}
