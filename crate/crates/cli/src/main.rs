fn main() {
    std::process::exit(dsqa_cli::main_with_args(std::env::args_os()));
}
