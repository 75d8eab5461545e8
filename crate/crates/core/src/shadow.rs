//! Shadow-mode control: every step either the learning agent or the
//! baseline controller acts, never a blend of the two.
//!
//! Two switching rules are supported. With [`DecisionMode::AgentDecision`]
//! the actor emits a third output, rescaled from [-1, 1] to [0, 1], and acts
//! when that value strictly exceeds `eta`. With [`DecisionMode::QCompare`]
//! the agent acts when the critic strictly prefers its proposal to the
//! baseline action. Whatever was executed is what gets stored, so the critic
//! is always trained on the actual behaviour.
//!
//! Episodes start with a prefix of `t_train` baseline-only steps that are
//! not recorded; the prefix only serves to reach states deeper along the
//! baseline's trajectory.

use std::fmt;

use rand::Rng;

use crate::baseline::baseline_action;
use crate::ddpg::{DdpgAgent, ReplayBuffer, Transition};
use crate::env::{Observation, ACTION_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionMode {
    AgentDecision { eta: f64, lambda: f64 },
    QCompare,
    AgentOnly,
    BaselineOnly,
}

impl DecisionMode {
    /// Actor output width required by the mode.
    pub fn actor_width(&self) -> usize {
        match self {
            DecisionMode::AgentDecision { .. } => ACTION_DIM + 1,
            _ => ACTION_DIM,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DecisionMode::AgentDecision { .. } => "agent_decision",
            DecisionMode::QCompare => "qcompare",
            DecisionMode::AgentOnly => "agent_only",
            DecisionMode::BaselineOnly => "baseline_only",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DecisionMode::AgentDecision { eta, lambda } = *self {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Config(format!("eta must lie in [0, 1], got {eta}")));
            }
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
            }
        }
        Ok(())
    }

    pub fn check_agent(&self, agent: &DdpgAgent) -> Result<()> {
        if agent.action_dim() != self.actor_width() {
            return Err(Error::ModeMismatch {
                mode: self.name().to_string(),
                expected: self.actor_width(),
                actual: agent.action_dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for DecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionMode::AgentDecision { eta, lambda } => {
                write!(f, "agent_decision(eta={eta}, lambda={lambda})")
            }
            other => f.write_str(other.name()),
        }
    }
}

/// Outcome of one control-authority decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub executed_action: [f64; ACTION_DIM],
    pub stored_action: Vec<f64>,
    pub chose_agent: bool,
    /// Empty when the agent was not consulted (baseline-only prefix).
    pub agent_proposal: Vec<f64>,
    pub baseline_proposal: [f64; ACTION_DIM],
}

impl StepDecision {
    /// Whether this step belongs to the unrecorded baseline prefix.
    pub fn in_prefix(&self) -> bool {
        self.agent_proposal.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeSchedule {
    pub t_train: usize,
}

impl EpisodeSchedule {
    /// Schedule used for evaluation: no baseline prefix.
    pub const EVAL: EpisodeSchedule = EpisodeSchedule { t_train: 0 };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, horizon: usize) -> Self {
        EpisodeSchedule {
            t_train: sample_t_train(rng, horizon),
        }
    }
}

/// Uniform start of training in `0..horizon`.
pub fn sample_t_train<R: Rng + ?Sized>(rng: &mut R, horizon: usize) -> usize {
    assert!(horizon >= 1, "horizon must be at least 1");
    rng.random_range(0..horizon)
}

/// Rescales the actor's decision output from [-1, 1] to [0, 1].
pub fn decision_probability(raw: f64) -> f64 {
    (raw + 1.0) / 2.0
}

fn first_two(v: &[f64]) -> [f64; ACTION_DIM] {
    [v[0], v[1]]
}

/// Chooses who acts at step `t`. `explore` supplies the noise stream for
/// the agent's proposal during training; `None` gives greedy proposals.
pub fn decide<R: Rng + ?Sized>(
    mode: DecisionMode,
    obs: &Observation,
    agent: &DdpgAgent,
    t: usize,
    schedule: EpisodeSchedule,
    explore: Option<&mut R>,
) -> Result<StepDecision> {
    let baseline = baseline_action(obs);
    if t < schedule.t_train {
        return Ok(StepDecision {
            executed_action: baseline,
            stored_action: baseline.to_vec(),
            chose_agent: false,
            agent_proposal: Vec::new(),
            baseline_proposal: baseline,
        });
    }
    mode.check_agent(agent)?;
    let proposal = match explore {
        Some(rng) => agent.select_action(obs, true, rng),
        None => agent.greedy_action(obs),
    };
    decide_with_proposal(mode, obs, agent, proposal, baseline)
}

/// Decision for an already computed agent proposal.
pub fn decide_with_proposal(
    mode: DecisionMode,
    obs: &Observation,
    agent: &DdpgAgent,
    proposal: Vec<f64>,
    baseline: [f64; ACTION_DIM],
) -> Result<StepDecision> {
    if proposal.len() != mode.actor_width() {
        return Err(Error::ModeMismatch {
            mode: mode.name().to_string(),
            expected: mode.actor_width(),
            actual: proposal.len(),
        });
    }
    let agent_move = first_two(&proposal);
    let (chose_agent, stored_action) = match mode {
        DecisionMode::AgentDecision { eta, .. } => {
            let raw = proposal[ACTION_DIM];
            let chose = decision_probability(raw) > eta;
            let executed = if chose { agent_move } else { baseline };
            (chose, vec![executed[0], executed[1], raw])
        }
        DecisionMode::QCompare => {
            let q = agent.q_values(obs, &[&proposal, &baseline])?;
            let chose = q[0] > q[1];
            let executed = if chose { agent_move } else { baseline };
            (chose, executed.to_vec())
        }
        DecisionMode::AgentOnly => (true, agent_move.to_vec()),
        DecisionMode::BaselineOnly => (false, baseline.to_vec()),
    };
    Ok(StepDecision {
        executed_action: first_two(&stored_action),
        stored_action,
        chose_agent,
        agent_proposal: proposal,
        baseline_proposal: baseline,
    })
}

/// Reward stored for training: the regularisation penalty
/// `-lambda * |a_agent - a_base|` is applied in agent-decision mode only.
pub fn shaped_reward(reward: f64, mode: DecisionMode, a_agent: &[f64], a_base: &[f64; ACTION_DIM]) -> f64 {
    match mode {
        DecisionMode::AgentDecision { lambda, .. } if lambda > 0.0 => {
            let dx = a_agent[0] - a_base[0];
            let dy = a_agent[1] - a_base[1];
            reward - lambda * dx.hypot(dy)
        }
        _ => reward,
    }
}

/// Stores the step unless it belongs to the baseline prefix. Returns
/// whether a transition was pushed.
pub fn record_transition(
    mode: DecisionMode,
    decision: &StepDecision,
    obs: &Observation,
    reward: f64,
    next_obs: &Observation,
    terminal: bool,
    buffer: &mut ReplayBuffer,
) -> bool {
    if decision.in_prefix() {
        return false;
    }
    let reward = shaped_reward(reward, mode, &decision.agent_proposal, &decision.baseline_proposal);
    buffer.push(Transition {
        state: *obs,
        action: decision.stored_action.clone(),
        reward,
        next_state: *next_obs,
        terminal,
    });
    true
}
