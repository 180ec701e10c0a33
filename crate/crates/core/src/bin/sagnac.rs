fn main() {
    std::process::exit(sagnac::cli::run(std::env::args_os()));
}
