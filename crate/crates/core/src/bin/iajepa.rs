fn main() {
    std::process::exit(iajepa::cli::run(std::env::args_os()));
}
