use serde::{Deserialize, Serialize};

/// Shape of a mixed action: one categorical choice per discrete head and one
/// bounded real per continuous head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    /// Number of choices for each categorical head.
    pub categorical: Vec<usize>,
    /// Number of squashed-Gaussian heads, each acting in [-1, 1].
    pub continuous: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub discrete: Vec<usize>,
    pub continuous: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardParts {
    pub f_volt: f64,
    pub f_ctrl: f64,
    pub f_power: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub parts: RewardParts,
}

/// What the learners need from an environment.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_spec(&self) -> ActionSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &AgentAction) -> Transition;
}
