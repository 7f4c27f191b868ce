fn main() {
    std::process::exit(mgtd_cli::run(std::env::args_os()));
}
