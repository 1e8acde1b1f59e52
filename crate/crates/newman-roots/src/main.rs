use std::process::ExitCode;

fn main() -> ExitCode {
    newman_roots::cli::main()
}
