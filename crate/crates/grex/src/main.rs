fn main() {
    std::process::exit(grex::cli::main_from(std::env::args_os()));
}
