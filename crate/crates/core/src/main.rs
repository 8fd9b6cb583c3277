fn main() {
    std::process::exit(chns_core::cli::main_with_args(std::env::args_os()));
}
