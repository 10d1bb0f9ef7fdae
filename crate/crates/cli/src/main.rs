fn main() {
    std::process::exit(ttae_cli::run_from(std::env::args_os()));
}
