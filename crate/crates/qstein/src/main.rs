fn main() {
    std::process::exit(qstein::cli::run(std::env::args_os()));
}
