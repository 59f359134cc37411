use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use detcal::cli::{self, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match cli::thread_cap(std::env::var(cli::THREADS_ENV).ok().as_deref()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::EXIT_PARSE as u8);
        }
    };
    if let Some(n) = threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match cli::run(cli, &mut out) {
        Ok(()) => cli::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
