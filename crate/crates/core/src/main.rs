fn main() {
    std::process::exit(collapsar::cli::run_cli(std::env::args_os()));
}
