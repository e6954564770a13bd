fn main() {
    std::process::exit(evidenceflow::cli::run(std::env::args_os()));
}
