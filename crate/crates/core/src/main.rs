fn main() {
    std::process::exit(betlab::cli::main_with_args(std::env::args_os()));
}
