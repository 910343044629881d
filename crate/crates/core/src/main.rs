fn main() {
    std::process::exit(emgds::cli::run(std::env::args_os()));
}
