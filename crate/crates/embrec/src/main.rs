fn main() {
    std::process::exit(embrec::cli::cli_main(std::env::args_os()));
}
