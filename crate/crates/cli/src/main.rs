fn main() {
    std::process::exit(aenode_cli::main_with_args(std::env::args_os()));
}
