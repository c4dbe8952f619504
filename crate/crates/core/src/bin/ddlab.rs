fn main() {
    std::process::exit(ddlab::cli::run(std::env::args_os()));
}
