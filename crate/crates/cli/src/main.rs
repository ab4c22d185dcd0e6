fn main() {
    std::process::exit(sk_tap_cli::run_from_args(std::env::args_os()));
}
