//! The training loop: simulate, encode, act, store, learn.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::config::{TrainConfig, UpdateMode};
use crate::ddpg::Learner;
use crate::error::{Error, Result};
use crate::metrics::FlockStats;
use crate::observation::{encode_all, Observation, ObservationGrids};
use crate::replay::{ReplayBuffer, Transition};
use crate::reward::{step_rewards, RewardBreakdown};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::sim::{build_proximity_sets, reset_episode, step_world, ControlInput, WorldState};

/// Everything measured during one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// `rewards[t][i]`, evaluated on the state reached at step `t + 1`.
    pub rewards: Vec<Vec<RewardBreakdown>>,
    /// Undiscounted sum of each vehicle's inclusive rewards.
    pub returns: Vec<f64>,
    /// Same with the learner's discount factor.
    pub discounted_returns: Vec<f64>,
    pub stats: FlockStats,
    /// Mean vehicle-to-waypoint distance after each step.
    pub tracking: Vec<f64>,
    pub noise_scale: f64,
    pub updates: usize,
    /// Mean critic loss over this episode's updates; NaN before learning starts.
    pub critic_loss_mean: f64,
    pub wall_time: Duration,
}

impl EpisodeRecord {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    pub fn min_return(&self) -> f64 {
        self.returns.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_return(&self) -> f64 {
        self.returns.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Σ_t γ^t r_t`.
pub fn compute_return(rewards: &[f64], gamma: f64) -> f64 {
    // Horner form from the back keeps one multiply per term.
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// The learner a run starts from: the seeded random initialization.
pub fn initial_learner(cfg: &TrainConfig) -> Result<Learner> {
    Learner::new(
        cfg.actor_spec(),
        cfg.critic_spec(),
        cfg.learner,
        &mut stream_rng(cfg.seed, Stream::Network),
    )
}

/// What a training run exposes to its observer after each episode.
pub struct Progress<'a> {
    pub record: &'a EpisodeRecord,
    pub learner: &'a Learner,
    pub buffer: &'a ReplayBuffer,
}

pub struct Trainer {
    cfg: TrainConfig,
    grids: ObservationGrids,
    learner: Learner,
    buffer: ReplayBuffer,
    init_rng: SimRng,
    obstacle_rng: SimRng,
    exploration_rng: SimRng,
    replay_rng: SimRng,
    next_episode: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        Ok(Trainer {
            grids: cfg.observation_grids()?,
            learner: initial_learner(&cfg)?,
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            init_rng: stream_rng(seed, Stream::Init),
            obstacle_rng: stream_rng(seed, Stream::ObstacleWalk),
            exploration_rng: stream_rng(seed, Stream::Exploration),
            replay_rng: stream_rng(seed, Stream::Replay),
            next_episode: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn into_learner(self) -> Learner {
        self.learner
    }

    fn encode(&self, state: &WorldState) -> Vec<Arc<Observation>> {
        let sets = build_proximity_sets(state, &self.cfg.scenario);
        encode_all(state, &sets, &self.grids, self.cfg.execution)
            .into_iter()
            .map(Arc::new)
            .collect()
    }

    fn learn(&mut self, episode: usize, step: usize, losses: &mut Vec<f64>) -> Result<()> {
        let ready = self.cfg.warmup.max(self.cfg.batch_size);
        if self.buffer.len() < ready {
            return Ok(());
        }
        let count = match self.cfg.update_mode {
            UpdateMode::PerVehicle => self.cfg.scenario.n_vehicles,
            UpdateMode::PerStep => 1,
        };
        for _ in 0..count {
            let batch = self.buffer.sample(self.cfg.batch_size, &mut self.replay_rng)?;
            let stats = self.learner.update(&batch)?;
            if !stats.critic_loss.is_finite() || !stats.actor_objective.is_finite() {
                return Err(Error::Diverged {
                    episode,
                    step,
                    what: format!(
                        "critic loss {}, actor objective {}",
                        stats.critic_loss, stats.actor_objective
                    ),
                });
            }
            losses.push(stats.critic_loss);
        }
        Ok(())
    }

    /// Runs one episode with exploration and learning.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let started = Instant::now();
        let episode = self.next_episode;
        let scenario = self.cfg.scenario.clone();
        let noise_scale = self.cfg.noise_scale(episode);
        let horizon = scenario.episode_length;
        let n = scenario.n_vehicles;

        let mut state = reset_episode(&scenario, &mut self.init_rng);
        let mut observations = self.encode(&state);
        let mut rewards = Vec::with_capacity(horizon);
        let mut tracking = Vec::with_capacity(horizon);
        let mut stats = FlockStats::default();
        let mut losses = Vec::new();

        for step in 0..horizon {
            // every action comes from the same pre-step state
            let refs: Vec<&Observation> = observations.iter().map(|o| o.as_ref()).collect();
            let actions: Vec<ControlInput> =
                self.learner
                    .act_batch(&refs, noise_scale, &mut self.exploration_rng)?;
            let next = step_world(&state, &actions, &scenario, &mut self.obstacle_rng)?;
            let sets = build_proximity_sets(&next, &scenario);
            let breakdowns = step_rewards(&next, &sets, &actions, &self.cfg.rewards, &scenario);
            if let Some(bad) = breakdowns.iter().position(|b| !b.inclusive.is_finite()) {
                return Err(Error::Diverged {
                    episode,
                    step,
                    what: format!("reward of vehicle {bad} is {:?}", breakdowns[bad]),
                });
            }
            let next_observations: Vec<Arc<Observation>> =
                encode_all(&next, &sets, &self.grids, self.cfg.execution)
                    .into_iter()
                    .map(Arc::new)
                    .collect();
            tracking.push(stats.observe(&next, &scenario));

            for i in 0..n {
                self.buffer.push(Transition {
                    observation: Arc::clone(&observations[i]),
                    action: actions[i],
                    reward: breakdowns[i].inclusive,
                    next_observation: Arc::clone(&next_observations[i]),
                })?;
            }
            self.learn(episode, step, &mut losses)?;

            rewards.push(breakdowns);
            state = next;
            observations = next_observations;
        }

        let gamma = self.cfg.learner.gamma;
        let per_vehicle = |i: usize| -> Vec<f64> { rewards.iter().map(|r| r[i].inclusive).collect() };
        let returns = (0..n).map(|i| compute_return(&per_vehicle(i), 1.0)).collect();
        let discounted_returns = (0..n).map(|i| compute_return(&per_vehicle(i), gamma)).collect();
        let critic_loss_mean = if losses.is_empty() {
            f64::NAN
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        self.next_episode += 1;
        Ok(EpisodeRecord {
            episode,
            rewards,
            returns,
            discounted_returns,
            stats,
            tracking,
            noise_scale,
            updates: losses.len(),
            critic_loss_mean,
            wall_time: started.elapsed(),
        })
    }

    /// Runs the remaining configured episodes, handing each record to
    /// `observe` before starting the next.
    pub fn run<F>(&mut self, mut observe: F) -> Result<()>
    where
        F: FnMut(Progress<'_>) -> Result<()>,
    {
        while self.next_episode < self.cfg.episodes {
            let record = self.run_episode()?;
            observe(Progress {
                record: &record,
                learner: &self.learner,
                buffer: &self.buffer,
            })?;
        }
        Ok(())
    }
}

/// Trains from scratch and keeps every episode record.
pub fn run_training(cfg: &TrainConfig) -> Result<(Learner, Vec<EpisodeRecord>)> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut records = Vec::with_capacity(cfg.episodes);
    trainer.run(|p| {
        records.push(p.record.clone());
        Ok(())
    })?;
    Ok((trainer.into_learner(), records))
}
