fn main() {
    std::process::exit(qtreeff_cli::main_with_args(std::env::args_os()));
}
