fn main() {
    std::process::exit(occgame::cli::main_with_args(std::env::args_os()));
}
