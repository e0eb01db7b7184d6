fn main() {
    std::process::exit(clic_core::cli::run(std::env::args_os()));
}
