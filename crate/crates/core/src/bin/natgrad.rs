fn main() {
    std::process::exit(natgrad::cli::main_with_args(std::env::args_os()));
}
