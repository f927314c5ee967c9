fn main() {
    std::process::exit(lem::cli::run(std::env::args().collect()));
}
