use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let code = qss::cli::run(std::env::args_os(), &mut lock);
    let _ = lock.flush();
    ExitCode::from(code as u8)
}
