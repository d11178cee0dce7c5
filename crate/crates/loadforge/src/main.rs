fn main() {
    std::process::exit(loadforge::cli::dispatch(std::env::args_os()));
}
