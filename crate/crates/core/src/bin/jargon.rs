fn main() {
    std::process::exit(jargon::cli::run(std::env::args_os()));
}
