use std::process::ExitCode;

fn main() -> ExitCode {
    let mut out = std::io::stdout().lock();
    let code = ada3d::cli::run(std::env::args(), &mut out);
    ExitCode::from(code as u8)
}
