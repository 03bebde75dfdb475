fn main() {
    std::process::exit(safecase_cli::run_cli(std::env::args_os()));
}
