//! Reporting helpers for the acceptance run in `tests/acceptance.rs`.

use std::fmt::Display;
use std::process::ExitCode;
use std::time::Instant;

/// Collects one verdict per criterion and prints it as it arrives.
#[derive(Default)]
pub struct Report {
    verdicts: Vec<(u32, bool)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `check`, which returns whether the criterion holds and a detail
    /// line. An error counts as a failure.
    pub fn run<E: Display>(&mut self, id: u32, title: &str, check: impl FnOnce() -> Result<(bool, String), E>) {
        let start = Instant::now();
        let (ok, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {id} ({title}): {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
        self.verdicts.push((id, ok));
    }

    pub fn failures(&self) -> Vec<u32> {
        self.verdicts.iter().filter(|v| !v.1).map(|v| v.0).collect()
    }

    pub fn finish(self) -> ExitCode {
        let failed = self.failures();
        let total = self.verdicts.len();
        println!("acceptance: {} of {total} criteria passed", total - failed.len());
        if failed.is_empty() {
            ExitCode::SUCCESS
        } else {
            println!("acceptance: failed criteria {failed:?}");
            ExitCode::FAILURE
        }
    }
}

/// Formats a difference against its bound, e.g. `3.1e-7 <= 5e-7`.
pub fn within(diff: f64, bound: f64) -> (bool, String) {
    let ok = diff.abs() <= bound;
    (ok, format!("{:.2e} {} {bound:.0e}", diff.abs(), if ok { "<=" } else { ">" }))
}
