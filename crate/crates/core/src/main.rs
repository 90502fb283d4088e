fn main() {
    std::process::exit(silvaflux::cli::run(std::env::args_os()));
}
