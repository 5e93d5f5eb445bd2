fn main() {
    std::process::exit(firstpass::cli::main_with(std::env::args_os()));
}
