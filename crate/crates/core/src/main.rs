fn main() {
    std::process::exit(burstcast::cli::main_with_args(std::env::args_os()));
}
