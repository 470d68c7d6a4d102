fn main() {
    std::process::exit(wolffkit_cli::run(std::env::args()));
}
