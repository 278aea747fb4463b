fn main() {
    std::process::exit(mcmarg::cli::run(std::env::args_os()));
}
