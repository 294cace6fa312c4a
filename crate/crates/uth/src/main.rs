fn main() {
    std::process::exit(uth::cli::main_with_args(std::env::args_os()));
}
