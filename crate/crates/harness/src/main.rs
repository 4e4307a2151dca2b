use std::process::ExitCode;

use udrra_harness::cli::execute;
use udrra_harness::HarnessError;

fn main() -> ExitCode {
    match execute(std::env::args_os()) {
        Ok((outcome, dir)) => {
            let r = &outcome.report;
            for c in &r.checks {
                let status = match (c.asserted, c.pass) {
                    (false, _) => "INFO",
                    (true, true) => "PASS",
                    (true, false) => "FAIL",
                };
                println!("{status} {} observed={:.6e} limit={:.6e} {}", c.name, c.observed, c.limit, c.note);
            }
            println!("{}: {} ({} runs, written to {})", r.experiment, if r.pass { "pass" } else { "FAIL" }, r.runs.len(), dir.display());
            ExitCode::from(if r.pass { 0 } else { 1 })
        }
        Err(HarnessError::Usage(msg)) => {
            eprintln!("{}", msg.trim_end());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
