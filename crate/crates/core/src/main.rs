fn main() {
    std::process::exit(stochfet::cli::main_with_args(std::env::args_os()));
}
