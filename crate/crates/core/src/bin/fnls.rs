fn main() {
    std::process::exit(fnls_core::cli::dispatch(std::env::args_os()));
}
