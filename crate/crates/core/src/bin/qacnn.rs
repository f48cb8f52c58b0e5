fn main() {
    std::process::exit(qacnn::cli::main_with_args(std::env::args_os()));
}
