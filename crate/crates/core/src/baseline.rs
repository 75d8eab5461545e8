//! Scripted go-to-goal controller.

use crate::env::{Observation, ACTION_DIM};

/// Moves straight at the goal with the largest useful step per coordinate.
/// It has no notion of the obstacle and stalls once a move collides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BaselinePolicy;

impl BaselinePolicy {
    pub fn action(&self, obs: &Observation) -> [f64; ACTION_DIM] {
        baseline_action(obs)
    }
}

pub fn baseline_action(obs: &Observation) -> [f64; ACTION_DIM] {
    [
        (obs.goal.x - obs.agent.x).clamp(-1.0, 1.0),
        (obs.goal.y - obs.agent.y).clamp(-1.0, 1.0),
    ]
}
