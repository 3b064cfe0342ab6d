use std::io;
use std::process::ExitCode;

use clap::Parser;
use subrep::cli::{execute, Cli, EXIT_CONFIG, THREADS_ENV};

fn main() -> ExitCode {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads = match v.parse::<usize>() {
            Ok(t) if t > 0 => t,
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let code = execute(cli, &mut io::stdout().lock());
    ExitCode::from(code as u8)
}
