fn main() {
    std::process::exit(prd_core::cli::main_with_args(std::env::args_os()));
}
