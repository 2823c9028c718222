//! Acceptance battery, run serially. One PASS/FAIL line per criterion.
//!
//! A criterion with a documented limitation is reported as FAIL but does not
//! fail the run; any other failure exits with status 1.

use std::process::ExitCode;

use fracgel::suite::{run_suite_with, CriterionResult};

fn line(c: &CriterionResult) {
    let verdict = if c.passed { "PASS" } else { "FAIL" };
    println!("{verdict} {} {} ({} checks)", c.id, c.title, c.checks.len());
    if let Some(e) = &c.error {
        println!("    error: {e}");
    }
    for k in c.checks.iter().filter(|k| !k.passed) {
        println!("    {}: {:e} not {} {:e}", k.name, k.value, k.relation, k.bound);
    }
    if !c.passed {
        if let Some(note) = &c.known_limitation {
            println!("    documented limitation: {note}");
        }
    }
}

fn main() -> ExitCode {
    // serial mode: the determinism criterion compares bitwise
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().expect("thread pool");
    let report = match run_suite_with(0, &[], line) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("suite error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let unexpected = report.unexpected_failures();
    let total = report.criteria.len();
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    println!("{passed}/{total} criteria passed, {} unexpected failures", unexpected.len());
    if unexpected.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
