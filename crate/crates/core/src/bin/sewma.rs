fn main() {
    std::process::exit(sewma::cli::main());
}
