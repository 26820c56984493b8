use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(pseudobox_cli::LOG_ENV, "warn"))
        .init();
    pseudobox_cli::run(std::env::args_os())
}
