fn main() {
    std::process::exit(blindcal::cli::dispatch(std::env::args_os()));
}
