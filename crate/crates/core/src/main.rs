fn main() {
    std::process::exit(reqm::cli::run(std::env::args_os()));
}
