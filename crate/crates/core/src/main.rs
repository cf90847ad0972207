fn main() {
    std::process::exit(fiberlab::cli::run(std::env::args_os()));
}
