fn main() {
    std::process::exit(pcox::cli::run(std::env::args_os()));
}
