fn main() {
    std::process::exit(rdcrit::cli::main_with_args(std::env::args_os()));
}
