fn main() {
    std::process::exit(postjudge::cli::main());
}
