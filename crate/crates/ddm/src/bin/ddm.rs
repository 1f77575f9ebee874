fn main() {
    std::process::exit(ddm::cli::main_with_args(std::env::args_os()));
}
