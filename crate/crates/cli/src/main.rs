fn main() {
    std::process::exit(nestball_cli::main_with(std::env::args_os()));
}
