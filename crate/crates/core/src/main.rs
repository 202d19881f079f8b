fn main() {
    std::process::exit(rr_compress::harness::cli_main(std::env::args_os()));
}
