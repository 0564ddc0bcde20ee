fn main() {
    std::process::exit(spme_core::cli::main_with_args(std::env::args_os()));
}
