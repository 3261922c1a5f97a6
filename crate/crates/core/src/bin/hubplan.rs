fn main() {
    std::process::exit(hubplan::cli::main());
}
