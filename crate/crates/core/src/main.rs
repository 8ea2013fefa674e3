fn main() {
    std::process::exit(neurolan::cli::run(std::env::args_os()));
}
