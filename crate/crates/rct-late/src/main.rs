fn main() {
    std::process::exit(rct_late::cli::run(std::env::args_os()));
}
