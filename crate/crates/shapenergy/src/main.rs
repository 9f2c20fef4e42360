fn main() {
    std::process::exit(shapenergy::cli::run(std::env::args_os()));
}
