//! Two identical runs must agree byte for byte.

use std::path::Path;

use flockrl::config::TrainConfig;
use flockrl::run::train_run;

/// Files that must match between runs with the same config and seed.
pub fn compared_files(cfg: &TrainConfig) -> Vec<String> {
    let mut files = vec![
        "metrics.csv".to_string(),
        "reward_curve.csv".to_string(),
        "config.toml".to_string(),
        "final.ckpt".to_string(),
    ];
    if cfg.checkpoint_period > 0 {
        let mut k = cfg.checkpoint_period;
        while k < cfg.episodes {
            files.push(format!("checkpoints/episode-{k:06}.ckpt"));
            k += cfg.checkpoint_period;
        }
    }
    if cfg.log_step_rewards {
        files.push("step_rewards.csv".into());
    }
    files
}

/// Trains twice into `root/a` and `root/b`; returns the files that differ
/// (empty on success) and the number compared.
pub fn twin_runs(cfg: &TrainConfig, root: &Path) -> (Vec<String>, usize) {
    let a = root.join("a");
    let b = root.join("b");
    train_run(cfg, &a, |_| {}).expect("first run");
    train_run(cfg, &b, |_| {}).expect("second run");
    let files = compared_files(cfg);
    let differing = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).expect("file a") != std::fs::read(b.join(f)).expect("file b"))
        .cloned()
        .collect();
    (differing, files.len())
}
