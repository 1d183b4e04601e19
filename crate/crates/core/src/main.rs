fn main() {
    std::process::exit(behavcal::cli::main_with_args(std::env::args_os()));
}
