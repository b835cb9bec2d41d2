fn main() {
    std::process::exit(ddevd::cli::main_with_args(std::env::args_os()));
}
