//! Acceptance criteria, run in order. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails or exceeds its time budget.

#[path = "../common/mod.rs"]
mod common;

mod architecture;
mod critic;
mod end_to_end;
mod gating;
mod gradients;
mod masks;
mod metrics;
mod raster;
mod training;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(),
}

fn main() {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion { id: 1, name: "gradient integrity", budget: mins(2), run: gradients::run },
        Criterion { id: 2, name: "gating semantics", budget: mins(1), run: gating::run },
        Criterion { id: 3, name: "architecture fidelity", budget: mins(1), run: architecture::run },
        Criterion { id: 4, name: "critic objective sanity", budget: mins(1), run: critic::run },
        Criterion { id: 5, name: "toy training convergence", budget: mins(10), run: training::run },
        Criterion { id: 6, name: "mask family properties", budget: mins(1), run: masks::run },
        Criterion { id: 7, name: "rasterizer correctness", budget: mins(2), run: raster::run },
        Criterion { id: 8, name: "metric oracle equivalence", budget: mins(2), run: metrics::run },
        Criterion { id: 9, name: "end-to-end occlusion game", budget: mins(10), run: end_to_end::run },
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_none_or(|id| id == c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let verdict = match outcome {
            Err(_) => "FAIL",
            Ok(()) if elapsed > c.budget => "FAIL (over time budget)",
            Ok(()) => "PASS",
        };
        if verdict != "PASS" {
            failed += 1;
        }
        println!(
            "{verdict} criterion {}: {} ({:.1}s of {}s)",
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
