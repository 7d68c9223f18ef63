fn main() {
    std::process::exit(vaporcell_cli::run(std::env::args_os()));
}
