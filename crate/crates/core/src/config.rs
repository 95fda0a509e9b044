//! Run configuration.
//!
//! Configuration files are flat `key = value` lists (TOML syntax, no tables).
//! Every key is optional; absent keys take the defaults below, and a key that
//! is present but malformed is always an error naming that key.
//!
//! | key | default | unit / meaning |
//! |-----|---------|----------------|
//! | `n_vehicles` | 3 | |
//! | `n_obstacles` | 1 | |
//! | `dt` | 0.1 | s, sampling period |
//! | `v_max` | 0.15 | m/s, vehicle speed limit |
//! | `v_max_obstacle` | 0.1 | m/s, obstacle speed |
//! | `omega_max` | π | rad/s |
//! | `r_n` | 0.15 | m, communication range |
//! | `r_n_prime` | 0.1 | m, minimum vehicle separation |
//! | `r_o` | 0.25 | m, obstacle detection range |
//! | `r_o_prime` | 0.15 | m, minimum obstacle separation |
//! | `episode_length` | 50 | steps |
//! | `init_half_width` | 1.0 | m, spawn square half width |
//! | `waypoint_speed` | 0.1 | m/s |
//! | `obstacle_heading_noise` | 0.3 | rad, per-step std |
//! | `grid_side` | 11 | anchors per axis |
//! | `goal_half_width` | 1.0 | m, goal grid half width |
//! | `epsilon` | 1/(2√2) | 1/m, waypoint weight |
//! | `beta` | −0.1 | effort weight |
//! | `lambda` | 0.5 | own-reward share |
//! | `gamma` | 0.95 | discount |
//! | `tau` | 0.01 | target blend rate |
//! | `actor_lr`, `critic_lr` | 1e-3 | Adam step size |
//! | `adam_beta1`, `adam_beta2`, `adam_epsilon` | 0.9, 0.999, 1e-8 | |
//! | `conv1_filters`, `conv2_filters`, `kernel` | 8, 16, 3 | |
//! | `dense1`, `dense2` | 128, 64 | state path widths |
//! | `action_hidden`, `head_hidden` | 64, 64 | critic widths |
//! | `episodes` | 5000 | |
//! | `batch_size` | 64 | |
//! | `buffer_capacity` | 100000 | transitions |
//! | `warmup` | 1000 | transitions before learning starts |
//! | `update_mode` | `per_vehicle` | `per_vehicle` or `per_step` |
//! | `noise_start`, `noise_end` | 0.3, 0.05 | exploration scale |
//! | `noise_decay_fraction` | 0.5 | share of episodes over which noise decays |
//! | `checkpoint_period` | 1000 | episodes, 0 for final only |
//! | `reward_window` | 1000 | episodes per reward-curve point |
//! | `log_step_rewards` | false | write per-step reward rows |
//! | `parallel` | true | spread per-vehicle work over threads |
//! | `seed` | 0 | master seed |

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::ddpg::LearnerConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{Architecture, GridShape, NetworkSpec};
use crate::observation::{ObservationGrids, CHANNELS};
use crate::reward::RewardWeights;
use crate::sim::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One learner update after each vehicle's transition is stored.
    PerVehicle,
    /// One learner update per environment step.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: ScenarioConfig,
    pub rewards: RewardWeights,
    pub learner: LearnerConfig,
    pub architecture: Architecture,
    pub grid_side: usize,
    pub goal_half_width: f64,
    pub episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub update_mode: UpdateMode,
    pub noise_start: f64,
    pub noise_end: f64,
    pub noise_decay_fraction: f64,
    pub checkpoint_period: usize,
    pub reward_window: usize,
    pub log_step_rewards: bool,
    pub execution: Execution,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scenario: ScenarioConfig::default(),
            rewards: RewardWeights::default(),
            learner: LearnerConfig::default(),
            architecture: Architecture::default(),
            grid_side: 11,
            goal_half_width: 1.0,
            episodes: 5000,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup: 1000,
            update_mode: UpdateMode::PerVehicle,
            noise_start: 0.3,
            noise_end: 0.05,
            noise_decay_fraction: 0.5,
            checkpoint_period: 1000,
            reward_window: 1000,
            log_step_rewards: false,
            execution: Execution::Parallel,
            seed: 0,
        }
    }
}

pub const PRESETS: [&str; 3] = ["table2-row1", "table2-row2", "table2-row3"];

fn key_error(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.to_string(),
        message: message.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        other => return Err(key_error(key, format!("expected a number, found {other}"))),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(key_error(key, "value must be finite"))
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(key_error(key, format!("expected a non-negative integer, found {other}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    match v {
        Value::Boolean(b) => Ok(*b),
        other => Err(key_error(key, format!("expected true or false, found {other}"))),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    match v {
        Value::String(s) => Ok(s),
        other => Err(key_error(key, format!("expected a word, found {other}"))),
    }
}

impl TrainConfig {
    /// Defaults with the scenario of a named experiment preset.
    pub fn preset(name: &str) -> Result<Self> {
        let (n_vehicles, n_obstacles) = match name {
            "table2-row1" => (3, 1),
            "table2-row2" => (5, 1),
            "table2-row3" => (5, 2),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset `{other}`, expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut cfg = TrainConfig::default();
        cfg.scenario.n_vehicles = n_vehicles;
        cfg.scenario.n_obstacles = n_obstacles;
        Ok(cfg)
    }

    /// Sets one key from a parsed value.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let s = &mut self.scenario;
        let arch = &mut self.architecture;
        match key {
            "n_vehicles" => s.n_vehicles = as_usize(key, v)?,
            "n_obstacles" => s.n_obstacles = as_usize(key, v)?,
            "dt" => s.dt = as_f64(key, v)?,
            "v_max" => s.v_max = as_f64(key, v)?,
            "v_max_obstacle" => s.v_max_obstacle = as_f64(key, v)?,
            "omega_max" => s.omega_max = as_f64(key, v)?,
            "r_n" => s.r_n = as_f64(key, v)?,
            "r_n_prime" => s.r_n_prime = as_f64(key, v)?,
            "r_o" => s.r_o = as_f64(key, v)?,
            "r_o_prime" => s.r_o_prime = as_f64(key, v)?,
            "episode_length" => s.episode_length = as_usize(key, v)?,
            "init_half_width" => s.init_half_width = as_f64(key, v)?,
            "waypoint_speed" => s.waypoint_speed = as_f64(key, v)?,
            "obstacle_heading_noise" => s.obstacle_heading_noise = as_f64(key, v)?,
            "grid_side" => self.grid_side = as_usize(key, v)?,
            "goal_half_width" => self.goal_half_width = as_f64(key, v)?,
            "epsilon" => self.rewards.epsilon = as_f64(key, v)?,
            "beta" => self.rewards.beta = as_f64(key, v)?,
            "lambda" => self.rewards.lambda = as_f64(key, v)?,
            "gamma" => self.learner.gamma = as_f64(key, v)?,
            "tau" => self.learner.tau = as_f64(key, v)?,
            "actor_lr" => self.learner.actor_adam.learning_rate = as_f64(key, v)?,
            "critic_lr" => self.learner.critic_adam.learning_rate = as_f64(key, v)?,
            "adam_beta1" => {
                let b = as_f64(key, v)?;
                self.learner.actor_adam.beta1 = b;
                self.learner.critic_adam.beta1 = b;
            }
            "adam_beta2" => {
                let b = as_f64(key, v)?;
                self.learner.actor_adam.beta2 = b;
                self.learner.critic_adam.beta2 = b;
            }
            "adam_epsilon" => {
                let e = as_f64(key, v)?;
                self.learner.actor_adam.epsilon = e;
                self.learner.critic_adam.epsilon = e;
            }
            "conv1_filters" => arch.conv1_filters = as_usize(key, v)?,
            "conv2_filters" => arch.conv2_filters = as_usize(key, v)?,
            "kernel" => arch.kernel = as_usize(key, v)?,
            "dense1" => arch.dense1 = as_usize(key, v)?,
            "dense2" => arch.dense2 = as_usize(key, v)?,
            "action_hidden" => arch.action_hidden = as_usize(key, v)?,
            "head_hidden" => arch.head_hidden = as_usize(key, v)?,
            "episodes" => self.episodes = as_usize(key, v)?,
            "batch_size" => self.batch_size = as_usize(key, v)?,
            "buffer_capacity" => self.buffer_capacity = as_usize(key, v)?,
            "warmup" => self.warmup = as_usize(key, v)?,
            "update_mode" => {
                self.update_mode = match as_str(key, v)? {
                    "per_vehicle" => UpdateMode::PerVehicle,
                    "per_step" => UpdateMode::PerStep,
                    other => {
                        return Err(key_error(
                            key,
                            format!("expected per_vehicle or per_step, found {other}"),
                        ))
                    }
                }
            }
            "noise_start" => self.noise_start = as_f64(key, v)?,
            "noise_end" => self.noise_end = as_f64(key, v)?,
            "noise_decay_fraction" => self.noise_decay_fraction = as_f64(key, v)?,
            "checkpoint_period" => self.checkpoint_period = as_usize(key, v)?,
            "reward_window" => self.reward_window = as_usize(key, v)?,
            "log_step_rewards" => self.log_step_rewards = as_bool(key, v)?,
            "parallel" => {
                self.execution = if as_bool(key, v)? {
                    Execution::Parallel
                } else {
                    Execution::Sequential
                }
            }
            "seed" => match v {
                Value::Integer(i) if *i >= 0 => self.seed = *i as u64,
                other => return Err(key_error(key, format!("expected a non-negative integer, found {other}"))),
            },
            _ => return Err(key_error(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies every key of a flat key/value document.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("unreadable configuration: {e}")))?;
        for (key, value) in &table {
            if value.is_table() || value.is_array() {
                return Err(key_error(key, "nested values are not supported"));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override; bare words are read as strings.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, &value)
    }

    /// Current values as a key/value document that [`TrainConfig::apply_text`]
    /// reads back to an identical configuration.
    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let a = &self.architecture;
        let l = &self.learner;
        let mut out = String::new();
        let mut f = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let num = |x: f64| format!("{x:?}");
        f("n_vehicles", s.n_vehicles.to_string());
        f("n_obstacles", s.n_obstacles.to_string());
        f("dt", num(s.dt));
        f("v_max", num(s.v_max));
        f("v_max_obstacle", num(s.v_max_obstacle));
        f("omega_max", num(s.omega_max));
        f("r_n", num(s.r_n));
        f("r_n_prime", num(s.r_n_prime));
        f("r_o", num(s.r_o));
        f("r_o_prime", num(s.r_o_prime));
        f("episode_length", s.episode_length.to_string());
        f("init_half_width", num(s.init_half_width));
        f("waypoint_speed", num(s.waypoint_speed));
        f("obstacle_heading_noise", num(s.obstacle_heading_noise));
        f("grid_side", self.grid_side.to_string());
        f("goal_half_width", num(self.goal_half_width));
        f("epsilon", num(self.rewards.epsilon));
        f("beta", num(self.rewards.beta));
        f("lambda", num(self.rewards.lambda));
        f("gamma", num(l.gamma));
        f("tau", num(l.tau));
        f("actor_lr", num(l.actor_adam.learning_rate));
        f("critic_lr", num(l.critic_adam.learning_rate));
        f("adam_beta1", num(l.critic_adam.beta1));
        f("adam_beta2", num(l.critic_adam.beta2));
        f("adam_epsilon", num(l.critic_adam.epsilon));
        f("conv1_filters", a.conv1_filters.to_string());
        f("conv2_filters", a.conv2_filters.to_string());
        f("kernel", a.kernel.to_string());
        f("dense1", a.dense1.to_string());
        f("dense2", a.dense2.to_string());
        f("action_hidden", a.action_hidden.to_string());
        f("head_hidden", a.head_hidden.to_string());
        f("episodes", self.episodes.to_string());
        f("batch_size", self.batch_size.to_string());
        f("buffer_capacity", self.buffer_capacity.to_string());
        f("warmup", self.warmup.to_string());
        f(
            "update_mode",
            match self.update_mode {
                UpdateMode::PerVehicle => "\"per_vehicle\"".into(),
                UpdateMode::PerStep => "\"per_step\"".into(),
            },
        );
        f("noise_start", num(self.noise_start));
        f("noise_end", num(self.noise_end));
        f("noise_decay_fraction", num(self.noise_decay_fraction));
        f("checkpoint_period", self.checkpoint_period.to_string());
        f("reward_window", self.reward_window.to_string());
        f("log_step_rewards", self.log_step_rewards.to_string());
        f("parallel", (self.execution == Execution::Parallel).to_string());
        f("seed", self.seed.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.rewards.validate()?;
        self.learner.validate()?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        check(self.episodes >= 1, "episodes must be at least 1")?;
        check(self.batch_size >= 1, "batch_size must be at least 1")?;
        check(self.buffer_capacity >= 1, "buffer_capacity must be at least 1")?;
        check(self.warmup <= self.buffer_capacity, "warmup cannot exceed buffer_capacity")?;
        check(self.batch_size <= self.buffer_capacity, "batch_size cannot exceed buffer_capacity")?;
        check(self.grid_side >= 2, "grid_side must be at least 2")?;
        check(self.goal_half_width > 0.0, "goal_half_width must be positive")?;
        check(
            self.noise_start >= 0.0 && self.noise_end >= 0.0,
            "noise scales must be non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&self.noise_decay_fraction),
            "noise_decay_fraction must lie in [0, 1]",
        )?;
        check(self.reward_window >= 1, "reward_window must be at least 1")?;
        let a = &self.architecture;
        check(
            a.kernel >= 1 && self.grid_side >= 2 * a.kernel - 1,
            "grid too small for two convolutions",
        )?;
        Ok(())
    }

    /// Neighbor grid spans the communication range, obstacle grid the
    /// detection range.
    pub fn observation_grids(&self) -> Result<ObservationGrids> {
        ObservationGrids::new(
            self.grid_side,
            self.scenario.r_n,
            self.scenario.r_o,
            self.goal_half_width,
        )
    }

    pub fn input_shape(&self) -> GridShape {
        GridShape {
            height: self.grid_side,
            width: self.grid_side,
            channels: CHANNELS,
        }
    }

    pub fn actor_spec(&self) -> NetworkSpec {
        NetworkSpec::actor(
            &self.architecture,
            self.input_shape(),
            self.scenario.v_max,
            self.scenario.omega_max,
        )
    }

    pub fn critic_spec(&self) -> NetworkSpec {
        NetworkSpec::critic(
            &self.architecture,
            self.input_shape(),
            self.scenario.v_max,
            self.scenario.omega_max,
        )
    }

    /// Exploration scale for a zero-based episode index: linear decay from
    /// `noise_start` to `noise_end` over the decay window, constant after.
    pub fn noise_scale(&self, episode: usize) -> f64 {
        let horizon = self.noise_decay_fraction * self.episodes as f64;
        if horizon <= 0.0 {
            return self.noise_end;
        }
        let progress = (episode as f64 / horizon).min(1.0);
        self.noise_start + (self.noise_end - self.noise_start) * progress
    }
}
