//! File formats: per-episode CSV rows, reward curves, trajectories and
//! evaluation tables. Floats are written in shortest round-trip form, so
//! values read back are bit-identical to the ones written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FlockStats;
use crate::sim::WorldState;
use crate::trainer::EpisodeRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub return_mean: f64,
    pub return_min: f64,
    pub return_max: f64,
    pub discounted_return_mean: f64,
    pub tracking_error: f64,
    pub min_sep_obstacle: f64,
    pub min_sep_neighbor: f64,
    pub mean_sep_neighbor: f64,
    pub violation_fraction: f64,
    pub critic_loss_mean: f64,
    pub updates: usize,
    pub noise_scale: f64,
}

impl From<&EpisodeRecord> for MetricsRow {
    fn from(r: &EpisodeRecord) -> Self {
        MetricsRow {
            episode: r.episode,
            return_mean: r.mean_return(),
            return_min: r.min_return(),
            return_max: r.max_return(),
            discounted_return_mean: r.discounted_returns.iter().sum::<f64>()
                / r.discounted_returns.len() as f64,
            tracking_error: r.stats.tracking_error(),
            min_sep_obstacle: r.stats.min_obstacle_separation,
            min_sep_neighbor: r.stats.min_neighbor_separation,
            mean_sep_neighbor: r.stats.mean_neighbor_separation(),
            violation_fraction: r.stats.violation_fraction(),
            critic_loss_mean: r.critic_loss_mean,
            updates: r.updates,
            noise_scale: r.noise_scale,
        }
    }
}

/// Wall time lives apart from the metrics so that metrics files of two runs
/// with the same seed compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub episode: usize,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRewardRow {
    pub episode: usize,
    pub step: usize,
    pub vehicle: usize,
    pub connectivity: f64,
    pub obstacle: f64,
    pub waypoint: f64,
    pub effort: f64,
    pub total: f64,
    pub inclusive: f64,
}

pub fn step_reward_rows(r: &EpisodeRecord) -> impl Iterator<Item = StepRewardRow> + '_ {
    r.rewards.iter().enumerate().flat_map(move |(step, per_vehicle)| {
        per_vehicle.iter().enumerate().map(move |(vehicle, b)| StepRewardRow {
            episode: r.episode,
            step,
            vehicle,
            connectivity: b.connectivity,
            obstacle: b.obstacle,
            waypoint: b.waypoint,
            effort: b.effort,
            total: b.total,
            inclusive: b.inclusive,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCurveRow {
    pub first_episode: usize,
    pub last_episode: usize,
    pub episodes: usize,
    pub mean_return: f64,
}

/// Mean episode return over consecutive windows; the last window may be short.
pub fn reward_curve(mean_returns: &[f64], window: usize) -> Vec<RewardCurveRow> {
    mean_returns
        .chunks(window.max(1))
        .enumerate()
        .map(|(k, chunk)| RewardCurveRow {
            first_episode: k * window,
            last_episode: k * window + chunk.len() - 1,
            episodes: chunk.len(),
            mean_return: chunk.iter().sum::<f64>() / chunk.len() as f64,
        })
        .collect()
}

/// One evaluation episode's raw sums; merging rows in order reproduces the
/// evaluation aggregate exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisodeRow {
    pub episode: usize,
    pub steps: u64,
    pub vehicle_steps: u64,
    pub tracking_sum: f64,
    pub tracking_error: f64,
    pub min_sep_obstacle: f64,
    pub min_sep_neighbor: f64,
    pub neighbor_sep_sum: f64,
    pub neighbor_pairs: u64,
    pub violations: u64,
}

impl EvalEpisodeRow {
    pub fn new(episode: usize, s: &FlockStats) -> Self {
        EvalEpisodeRow {
            episode,
            steps: s.steps,
            vehicle_steps: s.vehicle_steps,
            tracking_sum: s.tracking_sum,
            tracking_error: s.tracking_error(),
            min_sep_obstacle: s.min_obstacle_separation,
            min_sep_neighbor: s.min_neighbor_separation,
            neighbor_sep_sum: s.neighbor_separation_sum,
            neighbor_pairs: s.neighbor_pairs,
            violations: s.violations,
        }
    }

    pub fn stats(&self) -> FlockStats {
        FlockStats {
            steps: self.steps,
            vehicle_steps: self.vehicle_steps,
            tracking_sum: self.tracking_sum,
            min_obstacle_separation: self.min_sep_obstacle,
            min_neighbor_separation: self.min_sep_neighbor,
            neighbor_separation_sum: self.neighbor_sep_sum,
            neighbor_pairs: self.neighbor_pairs,
            violations: self.violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub episode: usize,
    pub step: usize,
    pub entity: String,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Empty for the waypoint, which has no heading.
    pub heading: Option<f64>,
}

pub fn trajectory_rows(episode: usize, states: &[WorldState]) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for (step, s) in states.iter().enumerate() {
        for (id, v) in s.vehicles.iter().enumerate() {
            rows.push(TrajectoryRow {
                episode,
                step,
                entity: "vehicle".into(),
                id,
                x: v.x,
                y: v.y,
                heading: Some(v.heading),
            });
        }
        for (id, o) in s.obstacles.iter().enumerate() {
            rows.push(TrajectoryRow {
                episode,
                step,
                entity: "obstacle".into(),
                id,
                x: o.position.x,
                y: o.position.y,
                heading: Some(o.heading),
            });
        }
        rows.push(TrajectoryRow {
            episode,
            step,
            entity: "waypoint".into(),
            id: 0,
            x: s.waypoint.x,
            y: s.waypoint.y,
            heading: None,
        });
    }
    rows
}

/// A CSV file being appended row by row.
pub struct CsvSink {
    path: std::path::PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(CsvSink {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row).map_err(|e| csv_error(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut sink = CsvSink::create(path)?;
    for row in rows {
        sink.write(&row)?;
    }
    sink.flush()
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
