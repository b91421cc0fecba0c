fn main() {
    std::process::exit(vsr::cli::run(std::env::args_os()));
}
