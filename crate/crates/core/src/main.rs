fn main() {
    std::process::exit(polykinetic::cli::cli_main(std::env::args().collect()));
}
