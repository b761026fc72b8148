fn main() {
    std::process::exit(lexlstm::cli::main_with(std::env::args_os()));
}
