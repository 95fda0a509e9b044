//! Deterministic policy gradient learner with one actor and one critic shared
//! by every vehicle, plus slowly blended target copies of both.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, GradRequest, Network, NetworkSpec, ParameterSet};
use crate::observation::Observation;
pub use crate::replay::Minibatch;
use crate::replay::{actions_matrix, stack};
use crate::sim::ControlInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.95,
            tau: 0.01,
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig("tau must lie in [0, 1]".into()));
        }
        for adam in [&self.actor_adam, &self.critic_adam] {
            if !(adam.learning_rate > 0.0)
                || !(0.0..1.0).contains(&adam.beta1)
                || !(0.0..1.0).contains(&adam.beta2)
                || !(adam.epsilon > 0.0)
            {
                return Err(Error::InvalidConfig("invalid Adam hyperparameters".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    /// Critic loss before the step.
    pub critic_loss: f64,
    /// Mean `Q(s, μ(s))` over the batch before the actor step.
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct Learner {
    pub actor_net: Network,
    pub critic_net: Network,
    pub actor: ParameterSet,
    pub critic: ParameterSet,
    pub target_actor: ParameterSet,
    pub target_critic: ParameterSet,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub config: LearnerConfig,
}

impl Learner {
    /// Fresh networks; the targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(
        actor_spec: NetworkSpec,
        critic_spec: NetworkSpec,
        config: LearnerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if actor_spec.is_critic() || actor_spec.output_scaling.is_none() {
            return Err(Error::InvalidConfig("actor needs output scaling and no action input".into()));
        }
        if !critic_spec.is_critic() {
            return Err(Error::InvalidConfig("critic needs an action input".into()));
        }
        let actor_net = Network::new(actor_spec)?;
        let critic_net = Network::new(critic_spec)?;
        if critic_net.output_len() != 1 || critic_net.action_dim() != actor_net.output_len() {
            return Err(Error::InvalidConfig(
                "critic must take the actor's output and produce one value".into(),
            ));
        }
        let actor = actor_net.init_params(rng);
        let critic = critic_net.init_params(rng);
        Ok(Learner {
            actor_adam: AdamState::new(config.actor_adam, &actor),
            critic_adam: AdamState::new(config.critic_adam, &critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_net,
            critic_net,
            config,
        })
    }

    /// Per-component `(bias, bound)` of the actor output.
    pub fn action_range(&self) -> [(f64, f64); 2] {
        let s = self
            .actor_net
            .spec()
            .output_scaling
            .as_ref()
            .expect("checked at construction");
        [(s.bias[0], s.bound[0]), (s.bias[1], s.bound[1])]
    }

    /// `y = r + γ·Q'(s', μ'(s'))` from the target networks.
    pub fn target_values(&self, batch: &Minibatch) -> Result<Vec<f64>> {
        let next = batch.next_observations();
        let next_actions = self.actor_net.predict(&self.target_actor, next.view(), None)?;
        let q = self
            .critic_net
            .predict(&self.target_critic, next.view(), Some(next_actions.view()))?;
        Ok(batch
            .rewards()
            .iter()
            .zip(q.column(0))
            .map(|(r, q)| r + self.config.gamma * q)
            .collect())
    }

    /// Mean squared Bellman error of the online critic against `targets`,
    /// with its parameter gradient.
    pub fn critic_loss_and_gradient(
        &self,
        observations: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: &[f64],
    ) -> Result<(f64, ParameterSet)> {
        let (q, cache) = self
            .critic_net
            .forward(&self.critic, observations, Some(actions))?;
        let n = targets.len() as f64;
        let mut loss = 0.0;
        let mut dq = Array2::zeros((targets.len(), 1));
        for (k, (&y, &qk)) in targets.iter().zip(q.column(0)).enumerate() {
            let err = y - qk;
            loss += err * err;
            dq[[k, 0]] = -2.0 * err / n;
        }
        let grads = self
            .critic_net
            .backward(&self.critic, &cache, dq.view(), GradRequest::PARAMS)?;
        Ok((loss / n, grads.params.expect("parameter gradient requested")))
    }

    /// One Adam step on the critic; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &Minibatch) -> Result<f64> {
        let targets = self.target_values(batch)?;
        let (loss, grads) = self.critic_loss_and_gradient(
            batch.observations().view(),
            batch.actions().view(),
            &targets,
        )?;
        self.critic_adam.update(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// `mean Q(s, μ(s))` and its gradient with respect to the actor, chained
    /// through `∇_a Q`. The critic is held fixed.
    pub fn actor_objective_and_gradient(
        &self,
        observations: ArrayView2<f64>,
    ) -> Result<(f64, ParameterSet)> {
        let (actions, actor_cache) = self.actor_net.forward(&self.actor, observations, None)?;
        let (q, critic_cache) =
            self.critic_net
                .forward(&self.critic, observations, Some(actions.view()))?;
        let n = q.nrows() as f64;
        let objective = q.sum() / n;
        let dq = Array2::from_elem((q.nrows(), 1), 1.0 / n);
        let da = self
            .critic_net
            .backward(&self.critic, &critic_cache, dq.view(), GradRequest::ACTION_ONLY)?
            .action
            .expect("critic returns an action gradient");
        let grads = self
            .actor_net
            .backward(&self.actor, &actor_cache, da.view(), GradRequest::PARAMS)?;
        Ok((objective, grads.params.expect("parameter gradient requested")))
    }

    /// One Adam ascent step on the actor; returns the objective before it.
    pub fn actor_update(&mut self, batch: &Minibatch) -> Result<f64> {
        let (objective, mut grads) = self.actor_objective_and_gradient(batch.observations().view())?;
        grads.scale(-1.0);
        self.actor_adam.update(&mut self.actor, &grads)?;
        Ok(objective)
    }

    pub fn soft_update(&mut self) -> Result<()> {
        let tau = self.config.tau;
        self.target_critic.blend_from(&self.critic, tau)?;
        self.target_actor.blend_from(&self.actor, tau)?;
        Ok(())
    }

    /// Critic step, actor step, then target blend.
    pub fn update(&mut self, batch: &Minibatch) -> Result<UpdateStats> {
        let critic_loss = self.critic_update(batch)?;
        let actor_objective = self.actor_update(batch)?;
        self.soft_update()?;
        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }

    /// Deterministic policy output for a stack of observations.
    pub fn policy(&self, observations: &[&Observation]) -> Result<Vec<ControlInput>> {
        let x = stack(observations.iter().copied());
        let y = self.actor_net.predict(&self.actor, x.view(), None)?;
        Ok(y.rows()
            .into_iter()
            .map(|r| ControlInput::new(r[0], r[1]))
            .collect())
    }

    /// Policy output plus Gaussian exploration noise with per-component
    /// standard deviation `noise_scale·bound`, clipped to the action range.
    /// Noise is drawn in observation order.
    pub fn act_batch<R: Rng + ?Sized>(
        &self,
        observations: &[&Observation],
        noise_scale: f64,
        rng: &mut R,
    ) -> Result<Vec<ControlInput>> {
        let [(v_bias, v_bound), (w_bias, w_bound)] = self.action_range();
        let (v_lo, v_hi) = (v_bias - v_bound, v_bias + v_bound);
        let (w_lo, w_hi) = (w_bias - w_bound, w_bias + w_bound);
        let mut actions = self.policy(observations)?;
        for a in &mut actions {
            if noise_scale > 0.0 {
                let nv: f64 = StandardNormal.sample(rng);
                let nw: f64 = StandardNormal.sample(rng);
                a.linear_velocity += noise_scale * v_bound * nv;
                a.angular_velocity += noise_scale * w_bound * nw;
            }
            a.linear_velocity = a.linear_velocity.clamp(v_lo, v_hi);
            a.angular_velocity = a.angular_velocity.clamp(w_lo, w_hi);
        }
        Ok(actions)
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        observation: &Observation,
        noise_scale: f64,
        rng: &mut R,
    ) -> Result<ControlInput> {
        Ok(self.act_batch(&[observation], noise_scale, rng)?[0])
    }

    /// Critic value of explicit observation/action pairs.
    pub fn q_values(&self, observations: &[&Observation], actions: &[ControlInput]) -> Result<Vec<f64>> {
        let x = stack(observations.iter().copied());
        let a = actions_matrix(actions.iter());
        let q = self.critic_net.predict(&self.critic, x.view(), Some(a.view()))?;
        Ok(q.column(0).to_vec())
    }
}
