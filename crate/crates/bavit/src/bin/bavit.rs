fn main() {
    std::process::exit(bavit::cli::run());
}
