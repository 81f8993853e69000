fn main() {
    std::process::exit(ridetilt::cli::run(std::env::args_os()));
}
