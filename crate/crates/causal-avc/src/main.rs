fn main() {
    std::process::exit(causal_avc::cli::run());
}
