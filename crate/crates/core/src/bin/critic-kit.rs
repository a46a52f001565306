fn main() {
    std::process::exit(critic_kit::cli::dispatch(std::env::args_os()));
}
