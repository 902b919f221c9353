fn main() {
    std::process::exit(carfollow_sr::cli::main_with_args(std::env::args_os()));
}
