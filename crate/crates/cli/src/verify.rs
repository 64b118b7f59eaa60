use std::process::ExitCode;

use wy_core::brute::cross_checks;

/// Prints one line per check; exit code 3 if any fails.
pub fn run(json: bool) -> ExitCode {
    let checks = cross_checks();
    if json {
        println!("{}", serde_json::to_string_pretty(&checks).expect("checks serialize"));
    } else {
        for c in &checks {
            if c.passed {
                println!("PASS  {}", c.name);
            } else {
                println!("FAIL  {}: {}", c.name, c.detail);
            }
        }
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
