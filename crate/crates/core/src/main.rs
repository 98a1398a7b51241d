fn main() {
    std::process::exit(screenseg::cli::run(std::env::args_os()));
}
