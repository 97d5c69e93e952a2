fn main() {
    std::process::exit(cscmppi::cli::main_with_args(std::env::args_os()));
}
