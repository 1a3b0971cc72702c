fn main() {
    std::process::exit(mvq::cli::main_with_args(std::env::args_os()));
}
