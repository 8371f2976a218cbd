fn main() {
    std::process::exit(qfsim::run_cli(std::env::args_os()));
}
