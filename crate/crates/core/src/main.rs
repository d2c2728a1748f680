fn main() {
    std::process::exit(mrp_core::cli::main_with_env());
}
