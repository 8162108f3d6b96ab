fn main() {
    std::process::exit(bridgepath::cli::dispatch(std::env::args_os()))
}
