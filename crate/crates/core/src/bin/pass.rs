fn main() {
    std::process::exit(pass_core::cli::main_exit_code());
}
