fn main() {
    std::process::exit(conehit_cli::main_with_args(std::env::args_os()));
}
