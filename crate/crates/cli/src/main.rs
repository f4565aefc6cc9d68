fn main() {
    std::process::exit(asa_cli::execute(std::env::args_os()));
}
