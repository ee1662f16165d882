fn main() {
    std::process::exit(aecpost::cli::run(std::env::args_os()));
}
