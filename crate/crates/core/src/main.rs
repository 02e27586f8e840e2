fn main() {
    std::process::exit(expander_bp::harness::cli_main(std::env::args_os()));
}
