fn main() {
    std::process::exit(hardiclass::cli::run(std::env::args_os()));
}
