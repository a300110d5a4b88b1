fn main() {
    std::process::exit(lowertail::cli::main_with_args(std::env::args_os()));
}
