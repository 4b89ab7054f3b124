fn main() {
    std::process::exit(labelaudit_cli::run(std::env::args_os()));
}
