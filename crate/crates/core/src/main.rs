fn main() {
    std::process::exit(leanreg::cli::main_with_args(std::env::args_os()));
}
