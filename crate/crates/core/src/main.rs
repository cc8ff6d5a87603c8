fn main() {
    std::process::exit(masksel::cli::run(std::env::args_os()));
}
