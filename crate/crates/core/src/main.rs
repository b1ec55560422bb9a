fn main() {
    std::process::exit(gnnfair::cli::run(std::env::args_os()));
}
