fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(filtration::cli::run_cli(&argv));
}
