fn main() {
    std::process::exit(npi_lab::cli::run_from_args(std::env::args_os()));
}
