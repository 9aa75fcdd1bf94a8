fn main() {
    std::process::exit(pvcell::cli::run(std::env::args_os()));
}
