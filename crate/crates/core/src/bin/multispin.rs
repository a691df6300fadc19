fn main() {
    std::process::exit(multispin_core::cli::main_with_args(std::env::args_os()));
}
