fn main() {
    std::process::exit(uaco::cli::run(std::env::args_os()));
}
