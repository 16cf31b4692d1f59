fn main() {
    std::process::exit(gruvd::cli::run());
}
