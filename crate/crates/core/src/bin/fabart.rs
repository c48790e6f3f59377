fn main() {
    std::process::exit(fabart::cli::run(std::env::args_os()));
}
