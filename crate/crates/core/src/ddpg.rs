//! Deterministic policy-gradient actor-critic learner with a FIFO replay
//! buffer and Polyak-averaged target networks.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Adam, ForwardCache, MlpNet, OutputActivation};

/// One stored environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    /// Executed action, plus the raw decision component when the agent
    /// controls authority itself.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Observation,
    /// Goal reached. Horizon truncation is not terminal.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest transition once full.
    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Result<Vec<&Transition>> {
        if self.items.len() < batch_size || self.items.is_empty() {
            return Err(Error::Underfilled {
                requested: batch_size,
                available: self.items.len(),
            });
        }
        Ok((0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub noise_std: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps of pure collection before the first update.
    pub warmup_steps: usize,
    /// Rewards are multiplied by this before entering the critic targets.
    /// Q-values reported by [`DdpgAgent::q_value`] are in reward units.
    pub reward_scale: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            gamma: 0.9,
            tau: 0.005,
            noise_std: 0.1,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            reward_scale: 0.01,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden layer sizes must be positive, got {:?}", self.hidden));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad(format!(
                "need 0 < batch_size <= buffer_capacity, got {} and {}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.reward_scale > 0.0) {
            return bad("learning rates and reward_scale must be positive".into());
        }
        Ok(())
    }
}

/// Maps arena coordinates (and the -1 sentinel) to roughly [-1, 1].
fn normalize_obs(obs: &Observation, out: &mut Vec<f64>) {
    out.extend(obs.to_array().iter().map(|v| v / 5.0 - 1.0));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Mean critic value of the actor's own actions, in reward units.
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: DdpgConfig,
    pub actor: MlpNet,
    pub critic: MlpNet,
    pub actor_target: MlpNet,
    pub critic_target: MlpNet,
    actor_opt: Adam,
    critic_opt: Adam,
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    states: Vec<f64>,
    next_states: Vec<f64>,
    critic_in: Vec<f64>,
    targets: Vec<f64>,
    out_grad: Vec<f64>,
    input_grad: Vec<f64>,
    actor_grad: Vec<f64>,
    critic_grads: Vec<f64>,
    actor_grads: Vec<f64>,
    actor_cache: ForwardCache,
    critic_cache: ForwardCache,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(config: DdpgConfig, action_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut actor_sizes = vec![OBS_DIM];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![OBS_DIM + action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let actor = MlpNet::new(&actor_sizes, OutputActivation::Tanh, rng)?;
        let critic = MlpNet::new(&critic_sizes, OutputActivation::Identity, rng)?;
        Self::from_networks(config, actor.clone(), critic.clone(), actor, critic)
    }

    pub fn from_networks(
        config: DdpgConfig,
        actor: MlpNet,
        critic: MlpNet,
        actor_target: MlpNet,
        critic_target: MlpNet,
    ) -> Result<Self> {
        let action_dim = actor.output_dim();
        if actor.input_dim() != OBS_DIM || critic.input_dim() != OBS_DIM + action_dim || critic.output_dim() != 1 {
            return Err(Error::Architecture(format!(
                "actor {:?} and critic {:?} do not fit together",
                actor.sizes(),
                critic.sizes()
            )));
        }
        if !actor.same_architecture(&actor_target) || !critic.same_architecture(&critic_target) {
            return Err(Error::Architecture("targets differ from their sources".into()));
        }
        Ok(DdpgAgent {
            actor_opt: Adam::new(actor.param_count(), config.actor_lr),
            critic_opt: Adam::new(critic.param_count(), config.critic_lr),
            config,
            actor,
            critic,
            actor_target,
            critic_target,
            scratch: Scratch::default(),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn greedy_action(&self, obs: &Observation) -> Vec<f64> {
        let mut input = Vec::with_capacity(OBS_DIM);
        normalize_obs(obs, &mut input);
        self.actor.forward(&input).expect("actor input width is fixed")
    }

    /// Actor output, optionally with Gaussian exploration noise, clamped to [-1, 1].
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &Observation, explore: bool, rng: &mut R) -> Vec<f64> {
        let mut action = self.greedy_action(obs);
        if explore && self.config.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.config.noise_std).expect("validated noise std");
            for a in &mut action {
                *a += normal.sample(rng);
            }
        }
        for a in &mut action {
            *a = a.clamp(-1.0, 1.0);
        }
        action
    }

    /// Critic estimate for `action` in `obs`, in reward units.
    pub fn q_value(&self, obs: &Observation, action: &[f64]) -> Result<f64> {
        Ok(self.q_values(obs, &[action])?[0])
    }

    /// Critic estimates for several candidate actions in the same state.
    pub fn q_values(&self, obs: &Observation, actions: &[&[f64]]) -> Result<Vec<f64>> {
        let width = self.action_dim();
        let mut input = Vec::with_capacity(actions.len() * (OBS_DIM + width));
        for a in actions {
            if a.len() != width {
                return Err(Error::Dimension {
                    expected: width,
                    actual: a.len(),
                });
            }
            normalize_obs(obs, &mut input);
            input.extend_from_slice(a);
        }
        let mut cache = ForwardCache::new();
        let out = self.critic.forward_batch(&input, actions.len(), &mut cache)?;
        Ok(out.iter().map(|q| q / self.config.reward_scale).collect())
    }

    /// Bootstrapped regression targets `scale * r + gamma * (1 - terminal) * Q'(s', mu'(s'))`,
    /// in scaled units.
    pub fn td_targets(&mut self, batch: &[&Transition]) -> Result<Vec<f64>> {
        self.compute_targets(batch)?;
        Ok(self.scratch.targets.clone())
    }

    fn compute_targets(&mut self, batch: &[&Transition]) -> Result<()> {
        let n = batch.len();
        let width = self.action_dim();
        let s = &mut self.scratch;
        s.next_states.clear();
        for t in batch {
            normalize_obs(&t.next_state, &mut s.next_states);
        }
        let next_actions = self.actor_target.forward_batch(&s.next_states, n, &mut s.actor_cache)?;
        s.critic_in.clear();
        for (i, a) in next_actions.chunks_exact(width).enumerate() {
            s.critic_in.extend_from_slice(&s.next_states[i * OBS_DIM..(i + 1) * OBS_DIM]);
            s.critic_in.extend_from_slice(a);
        }
        let next_q = self.critic_target.forward_batch(&s.critic_in, n, &mut s.critic_cache)?;
        s.targets.clear();
        for (t, q) in batch.iter().zip(next_q) {
            let bootstrap = if t.terminal { 0.0 } else { self.config.gamma * q };
            s.targets.push(self.config.reward_scale * t.reward + bootstrap);
        }
        Ok(())
    }

    /// One critic step toward the TD targets, one actor ascent step on the
    /// critic, then Polyak updates of both targets.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let critic_loss = self.update_critic(batch)?;
        let actor_objective = self.update_actor(batch)?;
        self.actor_target.soft_update(&self.actor, self.config.tau)?;
        self.critic_target.soft_update(&self.critic, self.config.tau)?;
        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }

    /// Critic regression step only; returns the mean squared TD error before
    /// the step, in scaled units.
    pub fn update_critic(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let width = self.action_dim();
        if let Some(t) = batch.iter().find(|t| t.action.len() != width) {
            return Err(Error::Dimension {
                expected: width,
                actual: t.action.len(),
            });
        }
        let n = batch.len();
        self.compute_targets(batch)?;

        let s = &mut self.scratch;
        s.critic_in.clear();
        for t in batch {
            normalize_obs(&t.state, &mut s.critic_in);
            s.critic_in.extend_from_slice(&t.action);
        }
        let q = self.critic.forward_batch(&s.critic_in, n, &mut s.critic_cache)?;
        let mut loss = 0.0;
        s.out_grad.clear();
        for (q, y) in q.iter().zip(&s.targets) {
            let err = q - y;
            loss += err * err;
            s.out_grad.push(2.0 * err / n as f64);
        }
        loss /= n as f64;
        s.critic_grads.resize(self.critic.param_count(), 0.0);
        self.critic
            .backward_batch(&mut s.critic_cache, &s.out_grad, &mut s.critic_grads, None)?;
        self.critic_opt.step(self.critic.params_mut(), &s.critic_grads)?;
        Ok(loss)
    }

    fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        let n = batch.len();
        let width = self.action_dim();
        let s = &mut self.scratch;
        s.states.clear();
        for t in batch {
            normalize_obs(&t.state, &mut s.states);
        }
        let actions = self.actor.forward_batch(&s.states, n, &mut s.actor_cache)?;
        s.critic_in.clear();
        for (i, a) in actions.chunks_exact(width).enumerate() {
            s.critic_in.extend_from_slice(&s.states[i * OBS_DIM..(i + 1) * OBS_DIM]);
            s.critic_in.extend_from_slice(a);
        }
        let q = self.critic.forward_batch(&s.critic_in, n, &mut s.critic_cache)?;
        let objective = q.iter().sum::<f64>() / n as f64 / self.config.reward_scale;

        // minimise -mean Q
        s.out_grad.clear();
        s.out_grad.resize(n, -1.0 / n as f64);
        s.critic_grads.resize(self.critic.param_count(), 0.0);
        self.critic.backward_batch(
            &mut s.critic_cache,
            &s.out_grad,
            &mut s.critic_grads,
            Some(&mut s.input_grad),
        )?;
        s.actor_grad.clear();
        for row in s.input_grad.chunks_exact(OBS_DIM + width) {
            s.actor_grad.extend_from_slice(&row[OBS_DIM..]);
        }
        s.actor_grads.resize(self.actor.param_count(), 0.0);
        self.actor
            .backward_batch(&mut s.actor_cache, &s.actor_grad, &mut s.actor_grads, None)?;
        self.actor_opt.step(self.actor.params_mut(), &s.actor_grads)?;
        Ok(objective)
    }
}
