fn main() {
    std::process::exit(hemlock::cli::main_from_env());
}
