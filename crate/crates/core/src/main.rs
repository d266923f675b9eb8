fn main() {
    std::process::exit(resonant::cli::run(std::env::args_os()));
}
