fn main() {
    std::process::exit(qedq::cli::run(std::env::args_os()));
}
