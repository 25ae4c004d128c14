fn main() {
    std::process::exit(tsf_mia::cli::run(std::env::args_os()));
}
