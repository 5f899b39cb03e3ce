//! Acceptance run at the default configuration: one line per criterion.
//!
//! Criterion 7 is a documented model-level failure (see README, "Known
//! deviations"); any other failing criterion fails this target.

use std::process::ExitCode;

use spdc_spatial::acceptance::{self, Status};
use spdc_spatial::config::ExperimentConfig;

const KNOWN_FAILURES: [u8; 1] = [7];

fn main() -> ExitCode {
    let results = match acceptance::run_all(&ExperimentConfig::default()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("acceptance run failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    print!("{}", acceptance::render(&results));
    let unexpected: Vec<u8> = results
        .iter()
        .filter(|r| r.status != Status::Pass && !KNOWN_FAILURES.contains(&r.id))
        .map(|r| r.id)
        .collect();
    let passed = results.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} criteria pass", results.len());
    if results.len() != 8 || !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
