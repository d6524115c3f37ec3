fn main() {
    std::process::exit(pitchtrack::cli::run_args(std::env::args_os()));
}
