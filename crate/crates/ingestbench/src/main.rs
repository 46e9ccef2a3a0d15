fn main() {
    std::process::exit(ingestbench::cli::main_entry());
}
