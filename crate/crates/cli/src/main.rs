fn main() {
    std::process::exit(docbin_cli::main_with_args(std::env::args_os()));
}
