fn main() {
    std::process::exit(qdiff::harness::cli::main_from_env());
}
