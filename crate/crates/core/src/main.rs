fn main() {
    std::process::exit(blockchol::cli::run());
}
