//! Runs every acceptance criterion and prints one line per criterion.

use std::process::ExitCode;

use beliefsim::repro::{criteria, run_criterion, FixtureSet, ReproSettings};

fn main() -> ExitCode {
    // libtest flags such as --nocapture or a name filter are ignored
    let fx = FixtureSet::embedded();
    let settings = ReproSettings::default();
    let mut failed = Vec::new();
    for c in criteria() {
        let outcome = run_criterion(c, &fx, &settings);
        println!("{}", outcome.line());
        if !outcome.passed {
            for check in outcome.checks.iter().filter(|k| !k.passed) {
                println!(
                    "    {}: expected {} measured {} tol {}",
                    check.name, check.expected, check.measured, check.tolerance
                );
            }
            failed.push(c.id);
        }
    }
    println!("{}/{} criteria passed", criteria().len() - failed.len(), criteria().len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
