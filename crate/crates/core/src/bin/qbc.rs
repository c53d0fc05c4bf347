fn main() {
    std::process::exit(qbc::cli::main_with_args(std::env::args_os()));
}
