use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionSpec, AgentAction, Environment, RewardParts, Transition};

/// Two states shown one-hot, two arms; arm k pays 1 in state k. Every
/// episode is a single step.
#[derive(Clone, Debug)]
pub struct TwoStateBandit {
    rng: ChaCha8Rng,
    state: usize,
}

impl Default for TwoStateBandit {
    fn default() -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(0), state: 0 }
    }
}

impl TwoStateBandit {
    fn obs(&self) -> Vec<f64> {
        let mut o = vec![0.0; 2];
        o[self.state] = 1.0;
        o
    }
}

impl Environment for TwoStateBandit {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec { categorical: vec![2], continuous: 0 }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.rng.random_range(0..2);
        self.obs()
    }

    fn step(&mut self, action: &AgentAction) -> Transition {
        let reward = (action.discrete[0] == self.state) as u8 as f64;
        Transition { obs: self.obs(), reward, done: true, parts: RewardParts::default() }
    }
}
