fn main() {
    std::process::exit(spt_core::cli::main_with_args(std::env::args_os()));
}
