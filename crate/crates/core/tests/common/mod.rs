//! Oracles shared by the integration tests and the acceptance report.
//! Everything here is written directly from the defining formulas, without
//! calling the library routine it checks.
#![allow(dead_code)]

pub mod determinism;
pub mod grad;
pub mod invariance;
pub mod oracle;
pub mod replay_stats;

use flockrl::config::TrainConfig;
use flockrl::nn::Architecture;

/// Small enough to finish a few episodes in well under a second.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        architecture: Architecture {
            conv1_filters: 2,
            conv2_filters: 2,
            kernel: 3,
            dense1: 8,
            dense2: 8,
            action_hidden: 8,
            head_hidden: 8,
        },
        grid_side: 7,
        episodes: 3,
        batch_size: 8,
        buffer_capacity: 200,
        warmup: 20,
        ..TrainConfig::default()
    }
}

/// Prints one acceptance line and returns whether it passed. Writes to the
/// stdout handle directly so the line survives the test harness's capture.
pub fn report(name: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
    pass
}
