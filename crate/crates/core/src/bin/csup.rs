fn main() {
    std::process::exit(canonical_sup::cli::run(std::env::args_os()));
}
