use std::process::ExitCode;

use clap::Parser;
use csl_turb_cli::{run, Cli};

/// Exit status when the run completed but a check failed.
const CHECK_FAILED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(t) = std::env::var("THREADS") {
        let threads = match t.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: THREADS must be a positive integer, got `{t}`");
                return ExitCode::FAILURE;
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for c in &report.manifest.checks {
                println!(
                    "check {:<28} {} value={:e} ({})",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.value,
                    c.limit
                );
            }
            println!("wrote {}", report.dir.display());
            if report.manifest.all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
