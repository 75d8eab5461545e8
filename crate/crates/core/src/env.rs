//! Reach-avoid arena: a point agent must reach a goal disc in a 10 x 10
//! square while an optional line-segment obstacle rejects colliding moves.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{clamp_to_arena, distance, segments_intersect, Point2, Segment2};

pub const ARENA_LO: f64 = 0.0;
pub const ARENA_HI: f64 = 10.0;
pub const ARENA_MID: f64 = 5.0;
/// Observation dimension: agent, goal, obstacle p, obstacle q.
pub const OBS_DIM: usize = 8;
pub const ACTION_DIM: usize = 2;
/// Obstacle endpoint value used when a scenario has no obstacle.
pub const NO_OBSTACLE: f64 = -1.0;

/// One random problem instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub start: Point2,
    pub goal: Point2,
    pub obstacle: Option<Segment2>,
}

impl Scenario {
    /// Draws a scenario: start in the left half, goal in the right half, and
    /// with probability `obstacle_probability` a segment obstacle whose
    /// center lies in [3,7]x[1,9], orientation in [0,pi), length in [2,5].
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, obstacle_probability: f64) -> Scenario {
        let start = Point2::new(
            rng.random_range(ARENA_LO..ARENA_MID),
            rng.random_range(ARENA_LO..=ARENA_HI),
        );
        // (5, 10]: reflect a draw from [0, 5)
        let goal = Point2::new(
            ARENA_HI - rng.random_range(0.0..ARENA_MID),
            rng.random_range(ARENA_LO..=ARENA_HI),
        );
        let coin: f64 = rng.random();
        let center = Point2::new(rng.random_range(3.0..=7.0), rng.random_range(1.0..=9.0));
        let angle = rng.random_range(0.0..PI);
        let length = rng.random_range(2.0..=5.0);
        let obstacle = if coin < obstacle_probability {
            let half = Point2::new(0.5 * length * angle.cos(), 0.5 * length * angle.sin());
            let p = clamp_to_arena(center - half, ARENA_LO, ARENA_HI);
            let q = clamp_to_arena(center + half, ARENA_LO, ARENA_HI);
            Segment2::new(p, q)
        } else {
            None
        };
        Scenario {
            start,
            goal,
            obstacle,
        }
    }

    pub fn is_valid(&self) -> bool {
        let inside = |p: Point2| {
            p.is_finite()
                && (ARENA_LO..=ARENA_HI).contains(&p.x)
                && (ARENA_LO..=ARENA_HI).contains(&p.y)
        };
        inside(self.start)
            && inside(self.goal)
            && self.start.x < ARENA_MID
            && self.goal.x > ARENA_MID
            && self.obstacle.is_none_or(|s| inside(s.p) && inside(s.q))
    }

    pub fn observation_at(&self, agent: Point2) -> Observation {
        let (p, q) = match self.obstacle {
            Some(s) => (s.p, s.q),
            None => (
                Point2::new(NO_OBSTACLE, NO_OBSTACLE),
                Point2::new(NO_OBSTACLE, NO_OBSTACLE),
            ),
        };
        Observation {
            agent,
            goal: self.goal,
            obs_p: p,
            obs_q: q,
        }
    }
}

/// Space-separated record: `start_x start_y goal_x goal_y has_obstacle p_x p_y q_x q_y`.
/// Floats are written in shortest round-trip form.
impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (has, p, q) = match self.obstacle {
            Some(s) => (1, s.p, s.q),
            None => (
                0,
                Point2::new(NO_OBSTACLE, NO_OBSTACLE),
                Point2::new(NO_OBSTACLE, NO_OBSTACLE),
            ),
        };
        write!(
            f,
            "{:?} {:?} {:?} {:?} {} {:?} {:?} {:?} {:?}",
            self.start.x, self.start.y, self.goal.x, self.goal.y, has, p.x, p.y, q.x, q.y
        )
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(line: &str) -> Result<Scenario> {
        let bad = |msg: &str| Error::Parse(format!("scenario record `{line}`: {msg}"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(bad(&format!("expected 9 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| bad(&format!("field {}: {e}", i + 1)))
        };
        let start = Point2::new(num(0)?, num(1)?);
        let goal = Point2::new(num(2)?, num(3)?);
        let obstacle = match fields[4] {
            "0" => None,
            "1" => Some(
                Segment2::new(Point2::new(num(5)?, num(6)?), Point2::new(num(7)?, num(8)?))
                    .ok_or_else(|| bad("zero-length obstacle"))?,
            ),
            other => return Err(bad(&format!("has_obstacle must be 0 or 1, got `{other}`"))),
        };
        let scenario = Scenario {
            start,
            goal,
            obstacle,
        };
        if !scenario.is_valid() {
            return Err(bad("coordinates outside the arena or wrong half"));
        }
        Ok(scenario)
    }
}

/// Policy input: agent position, goal position, obstacle endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub agent: Point2,
    pub goal: Point2,
    pub obs_p: Point2,
    pub obs_q: Point2,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.agent.x,
            self.agent.y,
            self.goal.x,
            self.goal.y,
            self.obs_p.x,
            self.obs_p.y,
            self.obs_q.x,
            self.obs_q.y,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Observation {
        assert_eq!(v.len(), OBS_DIM);
        Observation {
            agent: Point2::new(v[0], v[1]),
            goal: Point2::new(v[2], v[3]),
            obs_p: Point2::new(v[4], v[5]),
            obs_q: Point2::new(v[6], v[7]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Sparse,
    Dense,
}

impl FromStr for RewardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(RewardMode::Sparse),
            "dense" => Ok(RewardMode::Dense),
            _ => Err(Error::Config(format!("unknown reward mode `{s}`"))),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::Sparse => "sparse",
            RewardMode::Dense => "dense",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub epsilon: f64,
    pub horizon: usize,
    pub reward_mode: RewardMode,
    pub obstacle_probability: f64,
    pub goal_bonus: f64,
    pub step_penalty: f64,
    pub collision_penalty: f64,
    pub distance_coeff: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            epsilon: 0.5,
            horizon: 100,
            reward_mode: RewardMode::Sparse,
            obstacle_probability: 0.95,
            goal_bonus: 500.0,
            step_penalty: 1.0,
            collision_penalty: 2.0,
            distance_coeff: 2.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.obstacle_probability) {
            return Err(Error::Config(format!(
                "obstacle_probability must lie in [0, 1], got {}",
                self.obstacle_probability
            )));
        }
        Ok(())
    }

    /// Sparse reward: the goal bonus on the reaching step, the step penalty otherwise.
    pub fn reward_sparse(&self, reached: bool) -> f64 {
        if reached {
            self.goal_bonus
        } else {
            -self.step_penalty
        }
    }

    /// Dense reward: goal bonus plus progress shaping, collision penalty and
    /// the per-step penalty.
    pub fn reward_dense(&self, reached: bool, collided: bool, dist_prev: f64, dist_now: f64) -> f64 {
        let bonus = if reached { self.goal_bonus } else { 0.0 };
        let collision = if collided { -self.collision_penalty } else { 0.0 };
        bonus + self.distance_coeff * (dist_prev - dist_now) + collision - self.step_penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// Goal reached.
    pub terminated: bool,
    /// Horizon reached without reaching the goal.
    pub truncated: bool,
    pub collided: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct ReachAvoidEnv {
    config: EnvConfig,
    scenario: Scenario,
    agent: Point2,
    t: usize,
    done: bool,
}

impl ReachAvoidEnv {
    pub fn new(config: EnvConfig, scenario: Scenario) -> Self {
        ReachAvoidEnv {
            agent: scenario.start,
            config,
            scenario,
            t: 0,
            done: false,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn position(&self) -> Point2 {
        self.agent
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> Observation {
        self.scenario.observation_at(self.agent)
    }

    pub fn reset(&mut self, scenario: Scenario) -> Observation {
        self.scenario = scenario;
        self.agent = scenario.start;
        self.t = 0;
        self.done = false;
        self.observation()
    }

    pub fn step(&mut self, action: [f64; ACTION_DIM]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if !action.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidAction(format!("{action:?}")));
        }
        let dx = action[0].clamp(-1.0, 1.0);
        let dy = action[1].clamp(-1.0, 1.0);
        let prev = self.agent;
        let candidate = clamp_to_arena(prev + Point2::new(dx, dy), ARENA_LO, ARENA_HI);

        let collided = match (self.scenario.obstacle, Segment2::new(prev, candidate)) {
            (Some(obstacle), Some(path)) => segments_intersect(&path, &obstacle),
            _ => false,
        };
        if !collided {
            self.agent = candidate;
        }

        let goal = self.scenario.goal;
        let dist_prev = distance(prev, goal);
        let dist_now = distance(self.agent, goal);
        let terminated = dist_now <= self.config.epsilon;
        let reward = match self.config.reward_mode {
            RewardMode::Sparse => self.config.reward_sparse(terminated),
            RewardMode::Dense => self.config.reward_dense(terminated, collided, dist_prev, dist_now),
        };

        self.t += 1;
        let truncated = self.t >= self.config.horizon && !terminated;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated,
            truncated,
            collided,
        })
    }
}
