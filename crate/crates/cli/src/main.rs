fn main() {
    std::process::exit(nmqd_cli::run(std::env::args_os()));
}
