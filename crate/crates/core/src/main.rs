fn main() {
    std::process::exit(forkcode_core::cli::run(std::env::args_os()));
}
