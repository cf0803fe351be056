fn main() {
    std::process::exit(sd4x::cli::main_with_args(std::env::args_os()));
}
