fn main() {
    std::process::exit(gradalign::cli::main_with_args(std::env::args_os()));
}
