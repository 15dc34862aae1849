fn main() {
    std::process::exit(fkbridge::cli::run(std::env::args_os()));
}
