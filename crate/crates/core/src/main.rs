fn main() {
    std::process::exit(geomlaw::cli::run());
}
