fn main() {
    std::process::exit(vca_survey::cli::main());
}
