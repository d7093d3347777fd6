//! Runs every acceptance check and prints one line per check. Exits
//! non-zero when any check fails.

use std::process::ExitCode;

use fedalloc_bench::checks;

fn main() -> ExitCode {
    let outcomes = checks::run_all();
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!(
        "acceptance: {} passed, {} failed",
        outcomes.len() - failed.len(),
        failed.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
