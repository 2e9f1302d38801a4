use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(causal_dialog::cli::main())
}
