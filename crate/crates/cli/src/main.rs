fn main() {
    std::process::exit(phrom_cli::run_cli(std::env::args_os()));
}
