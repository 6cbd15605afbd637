//! Runs every acceptance criterion and prints one line per criterion.
//!
//! Literal criteria listed in `KNOWN_DEFECTS` are reported but do not fail
//! the target; every other failure does. `RPU_ACCEPTANCE=1,5,13` restricts
//! the run.

use rpu_merton::acceptance::{format_line, run_suite_with, VerifyOptions, KNOWN_DEFECTS};

fn main() {
    let mut opts = VerifyOptions::default();
    if let Ok(list) = std::env::var("RPU_ACCEPTANCE") {
        opts.selection = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    let scratch = tempfile::tempdir().expect("scratch directory");
    opts.scratch = Some(scratch.path().to_path_buf());

    println!("acceptance suite");
    let outcomes = run_suite_with(&opts, |o| println!("{}", format_line(o)));
    let passed = outcomes.iter().filter(|o| o.pass).count();
    let unexpected: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_DEFECTS.contains(&o.id.as_str()))
        .map(|o| o.id.as_str())
        .collect();
    let known: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass && KNOWN_DEFECTS.contains(&o.id.as_str()))
        .map(|o| o.id.as_str())
        .collect();
    println!("{passed}/{} passed", outcomes.len());
    if !known.is_empty() {
        println!("documented literal failures: {}", known.join(", "));
    }
    for o in outcomes.iter().filter(|o| !o.pass) {
        println!("  {}: {}", o.id, o.detail);
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
