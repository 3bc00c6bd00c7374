fn main() {
    std::process::exit(transience::cli::run(std::env::args_os()));
}
