fn main() {
    std::process::exit(turnpike_rhc::cli::main_with_args(std::env::args_os()));
}
