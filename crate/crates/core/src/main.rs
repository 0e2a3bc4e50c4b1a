fn main() {
    std::process::exit(dsa_forge::cli::run());
}
