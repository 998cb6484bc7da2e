fn main() -> std::process::ExitCode {
    hybrid_sac::cli::main_with_args(std::env::args_os())
}
