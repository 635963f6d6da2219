fn main() {
    std::process::exit(egsql::cli::run());
}
