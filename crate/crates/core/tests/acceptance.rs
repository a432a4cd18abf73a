//! Acceptance suite: prints one PASS/FAIL line per criterion and exits with
//! a failure status if any criterion fails. Criterion ids given on the
//! command line (`A1`, `A7`, ...) restrict the run.

use std::process::ExitCode;
use std::time::Instant;

use fairalloc::parallel::ExecMode;
use fairalloc::verify::{Suite, CRITERIA};

fn main() -> ExitCode {
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| CRITERIA.contains(&a.as_str()))
        .collect();
    let ids: Vec<&str> = if selected.is_empty() {
        CRITERIA.to_vec()
    } else {
        CRITERIA.iter().copied().filter(|c| selected.iter().any(|s| s == c)).collect()
    };
    let mut suite = Suite::new(ExecMode::Parallel);
    let mut failed = 0;
    for id in ids {
        let start = Instant::now();
        let r = suite.run(id);
        println!("{r}  ({:.1}s)", start.elapsed().as_secs_f64());
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
