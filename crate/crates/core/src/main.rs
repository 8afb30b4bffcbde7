fn main() {
    std::process::exit(fedcode::cli::main_with_args(std::env::args_os()));
}
