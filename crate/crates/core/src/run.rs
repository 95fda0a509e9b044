//! Run directories: everything a training or evaluation run writes to disk.
//!
//! ```text
//! <run>/manifest.json          config snapshot, version, seed, outputs, start time
//! <run>/config.toml            the same config as key/value text
//! <run>/metrics.csv            one row per episode
//! <run>/timing.csv             per-episode wall time
//! <run>/reward_curve.csv       windowed mean return
//! <run>/step_rewards.csv       per step and vehicle (optional)
//! <run>/checkpoints/*.ckpt     periodic checkpoints
//! <run>/final.ckpt
//! <run>/finished.json          end time and episode count
//! <run>/evaluation/            summary.json + episodes.csv from `evaluate`
//! ```

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{play_episode, run_evaluation, summarize, EvalSummary};
use crate::export::{
    read_csv, read_json, reward_curve, step_reward_rows, trajectory_rows, write_csv, write_json, CsvSink,
    EvalEpisodeRow, MetricsRow, TimingRow,
};
use crate::metrics::FlockStats;
use crate::trainer::{EpisodeRecord, Trainer};

pub const MANIFEST: &str = "manifest.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const EVALUATION_DIR: &str = "evaluation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub metrics: String,
    pub timing: String,
    pub reward_curve: String,
    pub step_rewards: Option<String>,
    pub checkpoints: String,
    pub final_checkpoint: String,
}

/// Written once, before the first episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub program: String,
    pub version: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub outputs: RunOutputs,
    pub started_unix_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCompletion {
    pub episodes: usize,
    pub finished_unix_ms: u128,
    pub mean_episode_ms: f64,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Reads a configuration back from a run manifest.
pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    read_json(path)
}

/// Trains into `dir`, calling `progress` after every episode.
pub fn train_run<F>(cfg: &TrainConfig, dir: &Path, mut progress: F) -> Result<RunCompletion>
where
    F: FnMut(&EpisodeRecord),
{
    cfg.validate()?;
    create_dir(dir)?;
    let ckpt_dir = dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let outputs = RunOutputs {
        metrics: "metrics.csv".into(),
        timing: "timing.csv".into(),
        reward_curve: "reward_curve.csv".into(),
        step_rewards: cfg.log_step_rewards.then(|| "step_rewards.csv".into()),
        checkpoints: "checkpoints".into(),
        final_checkpoint: FINAL_CHECKPOINT.into(),
    };
    let manifest = RunManifest {
        program: "flockrl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: cfg.clone(),
        outputs: outputs.clone(),
        started_unix_ms: now_ms(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_text()).map_err(|e| Error::io(&config_path, e))?;

    let mut metrics = CsvSink::create(&dir.join(&outputs.metrics))?;
    let mut timing = CsvSink::create(&dir.join(&outputs.timing))?;
    let mut steps = match &outputs.step_rewards {
        Some(name) => Some(CsvSink::create(&dir.join(name))?),
        None => None,
    };
    let mut mean_returns = Vec::with_capacity(cfg.episodes);
    let mut total_ms = 0.0;

    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.run(|p| {
        let r = p.record;
        metrics.write(&MetricsRow::from(r))?;
        let ms = r.wall_time.as_secs_f64() * 1e3;
        total_ms += ms;
        timing.write(&TimingRow {
            episode: r.episode,
            wall_time_ms: ms,
        })?;
        if let Some(sink) = steps.as_mut() {
            for row in step_reward_rows(r) {
                sink.write(&row)?;
            }
        }
        // a flush per episode keeps long runs inspectable while they train
        metrics.flush()?;
        timing.flush()?;
        mean_returns.push(r.mean_return());
        let done = r.episode + 1;
        if cfg.checkpoint_period > 0 && done % cfg.checkpoint_period == 0 && done < cfg.episodes {
            checkpoint::save(
                &ckpt_dir.join(format!("episode-{done:06}.ckpt")),
                p.learner,
                cfg,
                done,
            )?;
        }
        progress(r);
        Ok(())
    })?;
    metrics.flush()?;
    timing.flush()?;
    if let Some(sink) = steps.as_mut() {
        sink.flush()?;
    }
    write_csv(
        &dir.join(&outputs.reward_curve),
        reward_curve(&mean_returns, cfg.reward_window),
    )?;
    checkpoint::save(&dir.join(FINAL_CHECKPOINT), trainer.learner(), cfg, cfg.episodes)?;
    let completion = RunCompletion {
        episodes: cfg.episodes,
        finished_unix_ms: now_ms(),
        mean_episode_ms: total_ms / cfg.episodes as f64,
    };
    write_json(&dir.join("finished.json"), &completion)?;
    Ok(completion)
}

/// Evaluation output directory next to a checkpoint.
pub fn default_evaluation_dir(checkpoint: &Path) -> PathBuf {
    checkpoint
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(EVALUATION_DIR)
}

/// Evaluates a checkpoint and writes `summary.json` and `episodes.csv`.
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    episodes: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let ckpt = checkpoint::load(checkpoint_path)?;
    let evaluation = run_evaluation(&ckpt.learner, &ckpt.config, episodes, seed)?;
    let summary = evaluation.summary(&ckpt.config);
    create_dir(out_dir)?;
    write_csv(
        &out_dir.join("episodes.csv"),
        evaluation
            .episodes
            .iter()
            .enumerate()
            .map(|(e, s)| EvalEpisodeRow::new(e, s)),
    )?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Writes the states of selected greedy evaluation episodes as CSV rows.
pub fn export_trajectories(
    checkpoint_path: &Path,
    episodes: &[usize],
    seed: u64,
    out: &Path,
) -> Result<usize> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let grids = ckpt.config.observation_grids()?;
    let mut rows = Vec::new();
    for &e in episodes {
        let (_, states) = play_episode(&ckpt.learner, &ckpt.config, &grids, seed, e as u64, true)?;
        rows.extend(trajectory_rows(e, &states));
    }
    let count = rows.len();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_csv(out, rows)?;
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub run: String,
    pub vehicles: usize,
    pub obstacles: usize,
    pub mean_ms_per_episode: f64,
    pub tracking_error: f64,
    pub min_sep_obstacle: Option<f64>,
    pub min_sep_neighbor: Option<f64>,
    pub mean_sep_neighbor: Option<f64>,
    pub collision_step_fraction: f64,
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())),
        (None, None) => true,
        _ => false,
    }
}

/// One row of the scaling table, recomputed from a run's raw CSV files.
/// Fails if the recomputed metrics disagree with the stored evaluation
/// summary.
pub fn scaling_row(run_dir: &Path) -> Result<ScalingRow> {
    let manifest = load_manifest(&run_dir.join(MANIFEST))?;
    let timing: Vec<TimingRow> = read_csv(&run_dir.join(&manifest.outputs.timing))?;
    if timing.is_empty() {
        return Err(Error::InvalidConfig(format!("{}: no timed episodes", run_dir.display())));
    }
    let mean_ms = timing.iter().map(|t| t.wall_time_ms).sum::<f64>() / timing.len() as f64;

    let eval_dir = run_dir.join(EVALUATION_DIR);
    let rows: Vec<EvalEpisodeRow> = read_csv(&eval_dir.join("episodes.csv"))?;
    let stored: EvalSummary = read_json(&eval_dir.join("summary.json"))?;
    let mut total = FlockStats::default();
    for r in &rows {
        total.merge(&r.stats());
    }
    let recomputed = summarize(&total, rows.len(), stored.seed, &manifest.config);
    let agree = recomputed.episodes == stored.episodes
        && close(Some(recomputed.tracking_error), Some(stored.tracking_error))
        && close(recomputed.min_obstacle_separation, stored.min_obstacle_separation)
        && close(recomputed.min_neighbor_separation, stored.min_neighbor_separation)
        && close(recomputed.mean_neighbor_separation, stored.mean_neighbor_separation)
        && close(
            Some(recomputed.collision_step_fraction),
            Some(stored.collision_step_fraction),
        );
    if !agree {
        return Err(Error::InvalidConfig(format!(
            "{}: evaluation summary does not match its episode table",
            eval_dir.display()
        )));
    }
    Ok(ScalingRow {
        run: run_dir.display().to_string(),
        vehicles: manifest.config.scenario.n_vehicles,
        obstacles: manifest.config.scenario.n_obstacles,
        mean_ms_per_episode: mean_ms,
        tracking_error: recomputed.tracking_error,
        min_sep_obstacle: recomputed.min_obstacle_separation,
        min_sep_neighbor: recomputed.min_neighbor_separation,
        mean_sep_neighbor: recomputed.mean_neighbor_separation,
        collision_step_fraction: recomputed.collision_step_fraction,
    })
}

pub fn scaling_report(run_dirs: &[PathBuf]) -> Result<Vec<ScalingRow>> {
    run_dirs.iter().map(|d| scaling_row(d)).collect()
}

/// Plain-text table for terminals.
pub fn format_scaling_table(rows: &[ScalingRow]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = String::from(
        "vehicles  obstacles  ms/episode  tracking_err  min_sep_obs  min_sep_nbr  mean_sep_nbr  collision_frac\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:>8}  {:>9}  {:>10.2}  {:>12.4}  {:>11}  {:>11}  {:>12}  {:>14.4}\n",
            r.vehicles,
            r.obstacles,
            r.mean_ms_per_episode,
            r.tracking_error,
            opt(r.min_sep_obstacle),
            opt(r.min_sep_neighbor),
            opt(r.mean_sep_neighbor),
            r.collision_step_fraction
        ));
    }
    out
}
