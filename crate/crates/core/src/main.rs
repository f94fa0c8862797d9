fn main() {
    std::process::exit(rerest::cli::run());
}
