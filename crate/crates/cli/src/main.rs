fn main() {
    std::process::exit(lvmrs_cli::app::run_from(std::env::args_os()));
}
