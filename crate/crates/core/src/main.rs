fn main() {
    std::process::exit(semfilt::cli::run(std::env::args_os()));
}
