fn main() {
    std::process::exit(hyfft::cli::main_with_args(std::env::args_os()));
}
