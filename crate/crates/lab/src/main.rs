fn main() {
    std::process::exit(pfconv::cli::main_with_args(std::env::args_os()));
}
