fn main() {
    std::process::exit(dynscale_cli::main_with_args(std::env::args_os()));
}
