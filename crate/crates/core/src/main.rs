fn main() {
    std::process::exit(rede_core::cli::run(std::env::args_os()));
}
