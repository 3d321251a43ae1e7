fn main() {
    std::process::exit(mbdp::cli::run(std::env::args_os()));
}
