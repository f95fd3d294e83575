fn main() {
    std::process::exit(rbvsr::cli::run(std::env::args_os()));
}
