fn main() {
    std::process::exit(fcmir::cli::main_with_args(std::env::args_os()));
}
