fn main() {
    std::process::exit(outrand::cli::cli_dispatch(std::env::args_os()));
}
