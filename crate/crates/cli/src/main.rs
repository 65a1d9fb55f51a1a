fn main() {
    let code = flowalert_cli::main_with_args(std::env::args().skip(1).collect());
    std::process::exit(code);
}
