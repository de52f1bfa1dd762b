fn main() {
    std::process::exit(bfpool::cli::run(std::env::args_os()));
}
