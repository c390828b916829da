//! Acceptance suite: evaluates every criterion, prints one PASS/FAIL line
//! each (with measured values underneath) and exits nonzero if any fails.
//!
//! Positional arguments select criteria by number, e.g.
//! `cargo test --test acceptance -- 6 8`.

use std::process::ExitCode;

use regq_core::checks::{self, CheckOutcome};
use regq_core::Exec;

const SEED: u64 = 20_240_601;

fn evaluate(id: u8, scratch: &std::path::Path) -> CheckOutcome {
    let exec = Exec::Parallel;
    let (title, result) = match id {
        1 => ("policy enumeration", checks::criterion_1()),
        2 => ("regularized solution", checks::criterion_2()),
        3 => ("greedy-value golden", checks::criterion_3()),
        4 => ("contraction", checks::criterion_4(SEED)),
        5 => ("Gerschgorin threshold", checks::criterion_5()),
        6 => ("ODE sandwich", checks::criterion_6(exec)),
        7 => ("stochastic convergence", checks::criterion_7(SEED, exec)),
        8 => ("counterexample reproduction", checks::criterion_8(SEED, exec)),
        9 => ("error-bound inequality", checks::criterion_9()),
        10 => ("mean-field and noise moment", checks::criterion_10(SEED, exec)),
        11 => ("reduction identities", checks::criterion_11(SEED, exec)),
        12 => ("determinism", checks::criterion_12(SEED, scratch, exec)),
        _ => unreachable!(),
    };
    checks::or_failed(id, title, result)
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are passed through; only numbers select.
    let mut selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    selected.retain(|id| (1..=12).contains(id));
    if selected.is_empty() {
        selected = (1..=12).collect();
    }
    let scratch = tempfile::tempdir().expect("scratch dir");

    let mut lines = Vec::new();
    for id in selected {
        let outcome = evaluate(id, scratch.path());
        println!("{outcome}");
        lines.push((outcome.id, outcome.passed, outcome.title));
    }

    println!("\nsummary:");
    for (id, passed, title) in &lines {
        println!("{} criterion {id:>2}: {title}", if *passed { "PASS" } else { "FAIL" });
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    println!("{} passed; {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
