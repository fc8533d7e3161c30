fn main() -> std::process::ExitCode {
    motionguard::cli::run(std::env::args_os())
}
