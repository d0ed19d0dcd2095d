fn main() {
    std::process::exit(duplab::harness::cli_main(std::env::args_os()));
}
