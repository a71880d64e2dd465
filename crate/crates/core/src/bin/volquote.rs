fn main() {
    std::process::exit(volquote::cli::run());
}
