fn main() {
    std::process::exit(ringkit_cli::main_with_args(std::env::args_os()));
}
