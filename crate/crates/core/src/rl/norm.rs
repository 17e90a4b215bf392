use serde::{Deserialize, Serialize};

const CLIP: f64 = 10.0;

/// Running mean and variance for observation standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn update(&mut self, x: &[f64]) {
        let n = self.count + 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            let mean = self.mean[i] + d / n;
            self.var[i] = (self.var[i] * self.count + d * (x[i] - mean)) / n;
            self.mean[i] = mean;
        }
        self.count = n;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.mean[i]) / (self.var[i] + 1e-8).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }
}


/// Divides rewards by the running standard deviation of the discounted
/// return, leaving their sign and the optimal policy unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    gamma: f64,
    ret: f64,
    stats: RunningNorm,
}

impl RewardScaler {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, ret: 0.0, stats: RunningNorm::new(1) }
    }

    pub fn scale(&mut self, r: f64, done: bool) -> f64 {
        self.ret = self.gamma * self.ret + r;
        self.stats.update(&[self.ret]);
        if done {
            self.ret = 0.0;
        }
        r / (self.stats.var[0] + 1e-8).sqrt()
    }
}
