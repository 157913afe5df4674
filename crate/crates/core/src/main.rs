fn main() {
    std::process::exit(pans::cli::main_with_args(std::env::args_os()));
}
