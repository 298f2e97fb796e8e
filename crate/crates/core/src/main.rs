fn main() {
    std::process::exit(concord::cli::run());
}
