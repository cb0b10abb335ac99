fn main() {
    std::process::exit(seqrank_harness::cli_main(std::env::args_os()));
}
