fn main() {
    std::process::exit(goafem::cli::main_with_args(std::env::args_os()));
}
