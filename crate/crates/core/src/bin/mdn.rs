fn main() {
    std::process::exit(mdn::cli::run(std::env::args_os()));
}
