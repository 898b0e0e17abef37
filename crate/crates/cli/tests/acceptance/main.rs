//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so criteria execute sequentially and the timing
//! criterion is measured on a quiet process. Set `ACCEPTANCE_ONLY=3,5` to
//! run a subset. Failures are reported but only fail the process when
//! `ACCEPTANCE_STRICT=1` is set.

mod baselines;
mod common;
mod conv;
mod fitting;
mod gradients;
mod lipschitz;
mod repro;
mod resolution;
mod timing;
mod toy;

use std::time::Instant;

use common::Outcome;

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    // Timing first, before anything else has warmed or fragmented the heap.
    (8, "subsampled step cost is independent of source resolution", timing::run),
    (1, "gradients match finite differences", gradients::run),
    (2, "Fourier features fit high frequencies", fitting::run),
    (3, "pinned PointConv equals discrete convolution", conv::grid_equivalence),
    (4, "discriminator permutation and translation invariance", conv::symmetry),
    (5, "Lipschitz lemmas and bounds hold", lipschitz::run),
    (6, "toy adversarial training reaches equilibrium", toy::run),
    (7, "sampled functions are resolution independent", resolution::run),
    (9, "baseline diagnostics", baselines::run),
    (10, "reproducibility and persistence", repro::run),
];

fn selected() -> Option<Vec<u32>> {
    let raw = std::env::var("ACCEPTANCE_ONLY").ok()?;
    Some(raw.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() {
    let only = selected();
    let mut results = Vec::new();
    for (id, name, check) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let line = format!(
            "[{}] criterion {id}: {name} ({}; {:.1} s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        results.push((id, outcome.pass, line));
    }
    results.sort_by_key(|r| r.0);
    println!("\nsummary:");
    for (_, _, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.1).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
