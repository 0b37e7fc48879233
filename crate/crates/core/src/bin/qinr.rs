fn main() {
    std::process::exit(qinr::cli::main());
}
