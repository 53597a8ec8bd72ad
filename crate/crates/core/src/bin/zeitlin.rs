fn main() {
    std::process::exit(zeitlin::cli::run(std::env::args_os()));
}
