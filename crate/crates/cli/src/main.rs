fn main() {
    std::process::exit(srbkit_cli::run(std::env::args_os()));
}
