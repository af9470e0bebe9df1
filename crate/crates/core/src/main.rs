fn main() {
    std::process::exit(ufm_core::cli::run(std::env::args_os()));
}
