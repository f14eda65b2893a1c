fn main() {
    std::process::exit(dynafed_cli::run_cli(std::env::args()));
}
