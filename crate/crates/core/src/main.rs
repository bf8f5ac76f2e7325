fn main() {
    std::process::exit(singprof::cli::run(std::env::args_os()));
}
