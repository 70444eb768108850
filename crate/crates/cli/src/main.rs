fn main() {
    std::process::exit(trendweave_cli::main_with_args(std::env::args_os()));
}
