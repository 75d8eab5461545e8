//! Experiment configuration as flat `key = value` text grouped into
//! `[env]`, `[agent]`, `[shadow]`, `[harness]` and `[heatmap]` sections.
//!
//! Every key has a default; a file only lists what it changes. Keys are
//! addressed as `section.key` by overrides. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::ddpg::DdpgConfig;
use crate::env::{EnvConfig, RewardMode, Scenario};
use crate::geometry::{Point2, Segment2};
use crate::error::{Error, Result};
use crate::shadow::DecisionMode;

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub total_env_steps: usize,
    pub eval_every: usize,
    pub n_eval_scenarios: usize,
    pub testset_seed: u64,
    pub seeds: Vec<u64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            total_env_steps: 200_000,
            eval_every: 10_000,
            n_eval_scenarios: 100,
            testset_seed: 7,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Grid and scenario for the decision-ratio heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapConfig {
    pub resolution: usize,
    pub scenario: Scenario,
}

impl Default for HeatmapConfig {
    /// A vertical wall straight across the line from start to goal.
    fn default() -> Self {
        HeatmapConfig {
            resolution: 50,
            scenario: Scenario {
                start: Point2::new(1.0, 5.0),
                goal: Point2::new(9.0, 5.0),
                obstacle: Segment2::new(Point2::new(5.0, 3.0), Point2::new(5.0, 7.0)),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    AgentDecision,
    QCompare,
    AgentOnly,
    BaselineOnly,
}

/// Switching rule plus its parameters. `eta` and `lambda` only matter for
/// the agent-decision rule but are always carried so that the resolved
/// configuration is complete.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowConfig {
    pub mode: ModeKind,
    pub eta: f64,
    pub lambda: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            mode: ModeKind::QCompare,
            eta: 0.5,
            lambda: 0.0,
        }
    }
}

impl ShadowConfig {
    pub fn decision_mode(&self) -> DecisionMode {
        match self.mode {
            ModeKind::AgentDecision => DecisionMode::AgentDecision {
                eta: self.eta,
                lambda: self.lambda,
            },
            ModeKind::QCompare => DecisionMode::QCompare,
            ModeKind::AgentOnly => DecisionMode::AgentOnly,
            ModeKind::BaselineOnly => DecisionMode::BaselineOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: DdpgConfig,
    pub shadow: ShadowConfig,
    pub harness: HarnessConfig,
    pub heatmap: HeatmapConfig,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Applies the assignments in `text` on top of the current values.
    /// Keys are checked here; cross-field validation is left to [`Self::validate`].
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            let key = key.trim();
            let full = if key.contains('.') || section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&full, value.trim())?;
        }
        Ok(())
    }

    /// Applies a `section.key=value` override without cross-field validation.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "env.epsilon" => self.env.epsilon = parse_num(key, value)?,
            "env.horizon" => self.env.horizon = parse_num(key, value)?,
            "env.reward_mode" => self.env.reward_mode = value.parse::<RewardMode>()?,
            "env.obstacle_probability" => self.env.obstacle_probability = parse_num(key, value)?,
            "env.goal_bonus" => self.env.goal_bonus = parse_num(key, value)?,
            "env.step_penalty" => self.env.step_penalty = parse_num(key, value)?,
            "env.collision_penalty" => self.env.collision_penalty = parse_num(key, value)?,
            "env.distance_coeff" => self.env.distance_coeff = parse_num(key, value)?,
            "agent.hidden" => self.agent.hidden = parse_list(key, value)?,
            "agent.actor_lr" => self.agent.actor_lr = parse_num(key, value)?,
            "agent.critic_lr" => self.agent.critic_lr = parse_num(key, value)?,
            "agent.gamma" => self.agent.gamma = parse_num(key, value)?,
            "agent.tau" => self.agent.tau = parse_num(key, value)?,
            "agent.noise_std" => self.agent.noise_std = parse_num(key, value)?,
            "agent.batch_size" => self.agent.batch_size = parse_num(key, value)?,
            "agent.buffer_capacity" => self.agent.buffer_capacity = parse_num(key, value)?,
            "agent.warmup_steps" => self.agent.warmup_steps = parse_num(key, value)?,
            "agent.reward_scale" => self.agent.reward_scale = parse_num(key, value)?,
            "shadow.mode" => {
                self.shadow.mode = match value {
                    "agent_decision" => ModeKind::AgentDecision,
                    "qcompare" => ModeKind::QCompare,
                    "agent_only" => ModeKind::AgentOnly,
                    "baseline_only" => ModeKind::BaselineOnly,
                    other => return Err(Error::Config(format!("unknown mode `{other}`"))),
                }
            }
            "shadow.eta" => self.shadow.eta = parse_num(key, value)?,
            "shadow.lambda" => self.shadow.lambda = parse_num(key, value)?,
            "harness.total_env_steps" => self.harness.total_env_steps = parse_num(key, value)?,
            "harness.eval_every" => self.harness.eval_every = parse_num(key, value)?,
            "harness.n_eval_scenarios" => self.harness.n_eval_scenarios = parse_num(key, value)?,
            "harness.testset_seed" => self.harness.testset_seed = parse_num(key, value)?,
            "harness.seeds" => self.harness.seeds = parse_list(key, value)?,
            "heatmap.resolution" => self.heatmap.resolution = parse_num(key, value)?,
            "heatmap.scenario" => self.heatmap.scenario = parse_num(key, value.trim_matches('"'))?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn mode(&self) -> DecisionMode {
        self.shadow.decision_mode()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        DecisionMode::AgentDecision {
            eta: self.shadow.eta,
            lambda: self.shadow.lambda,
        }
        .validate()?;
        let h = &self.harness;
        if h.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if h.eval_every == 0 || !h.total_env_steps.is_multiple_of(h.eval_every) {
            return Err(Error::Config(format!(
                "eval_every ({}) must divide total_env_steps ({})",
                h.eval_every, h.total_env_steps
            )));
        }
        if h.n_eval_scenarios == 0 {
            return Err(Error::Config("n_eval_scenarios must be at least 1".into()));
        }
        if self.heatmap.resolution == 0 {
            return Err(Error::Config("heatmap resolution must be at least 1".into()));
        }
        if !self.heatmap.scenario.is_valid() {
            return Err(Error::Config(format!("heatmap scenario {} is invalid", self.heatmap.scenario)));
        }
        Ok(())
    }

    /// Fully resolved configuration, parseable by [`ExperimentConfig::from_text`].
    pub fn to_text(&self) -> String {
        let e = &self.env;
        let a = &self.agent;
        let h = &self.harness;
        let mut s = String::new();
        let _ = writeln!(s, "[env]");
        let _ = writeln!(s, "epsilon = {:?}", e.epsilon);
        let _ = writeln!(s, "horizon = {}", e.horizon);
        let _ = writeln!(s, "reward_mode = {}", e.reward_mode);
        let _ = writeln!(s, "obstacle_probability = {:?}", e.obstacle_probability);
        let _ = writeln!(s, "goal_bonus = {:?}", e.goal_bonus);
        let _ = writeln!(s, "step_penalty = {:?}", e.step_penalty);
        let _ = writeln!(s, "collision_penalty = {:?}", e.collision_penalty);
        let _ = writeln!(s, "distance_coeff = {:?}", e.distance_coeff);
        let _ = writeln!(s, "\n[agent]");
        let _ = writeln!(s, "hidden = {}", join(&a.hidden));
        let _ = writeln!(s, "actor_lr = {:?}", a.actor_lr);
        let _ = writeln!(s, "critic_lr = {:?}", a.critic_lr);
        let _ = writeln!(s, "gamma = {:?}", a.gamma);
        let _ = writeln!(s, "tau = {:?}", a.tau);
        let _ = writeln!(s, "noise_std = {:?}", a.noise_std);
        let _ = writeln!(s, "batch_size = {}", a.batch_size);
        let _ = writeln!(s, "buffer_capacity = {}", a.buffer_capacity);
        let _ = writeln!(s, "warmup_steps = {}", a.warmup_steps);
        let _ = writeln!(s, "reward_scale = {:?}", a.reward_scale);
        let _ = writeln!(s, "\n[shadow]");
        let _ = writeln!(s, "mode = {}", self.mode().name());
        let _ = writeln!(s, "eta = {:?}", self.shadow.eta);
        let _ = writeln!(s, "lambda = {:?}", self.shadow.lambda);
        let _ = writeln!(s, "\n[harness]");
        let _ = writeln!(s, "total_env_steps = {}", h.total_env_steps);
        let _ = writeln!(s, "eval_every = {}", h.eval_every);
        let _ = writeln!(s, "n_eval_scenarios = {}", h.n_eval_scenarios);
        let _ = writeln!(s, "testset_seed = {}", h.testset_seed);
        let _ = writeln!(s, "seeds = {}", join(&h.seeds));
        let _ = writeln!(s, "\n[heatmap]");
        let _ = writeln!(s, "resolution = {}", self.heatmap.resolution);
        let _ = writeln!(s, "scenario = {}", self.heatmap.scenario);
        s
    }
}
