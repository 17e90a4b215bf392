//! Per-head action distributions. The joint log-probability of a mixed
//! action is the sum over heads.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{HeadGrads, HeadOutputs};
use super::AgentAction;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// An action as sampled: category indices and the pre-squash Gaussian draws.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampledAction {
    pub discrete: Vec<usize>,
    pub raw: Vec<f64>,
}

impl SampledAction {
    pub fn to_agent(&self) -> AgentAction {
        AgentAction { discrete: self.discrete.clone(), continuous: self.raw.iter().map(|u| u.tanh()).collect() }
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

/// log(1 − tanh²u), stable for large |u|.
pub fn log_squash_jacobian(u: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn gaussian_log_density(u: f64, mu: f64, log_std: f64) -> f64 {
    let z = (u - mu) / log_std.exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

/// Density of a = tanh(u), u ~ N(mu, σ²), at a ∈ (−1, 1).
pub fn squashed_gaussian_density(a: f64, mu: f64, log_std: f64) -> f64 {
    let u = a.atanh();
    (gaussian_log_density(u, mu, log_std) - log_squash_jacobian(u)).exp()
}

pub fn log_prob(out: &HeadOutputs, a: &SampledAction) -> f64 {
    let mut lp = 0.0;
    for (z, &k) in out.logits.iter().zip(&a.discrete) {
        lp += log_softmax(z)[k];
    }
    for j in 0..out.mean.len() {
        let u = a.raw[j];
        lp += gaussian_log_density(u, out.mean[j], out.log_std[j]) - log_squash_jacobian(u);
    }
    lp
}

/// g += scale · ∂ log π(a) / ∂ outputs.
pub fn add_log_prob_grad(out: &HeadOutputs, a: &SampledAction, scale: f64, g: &mut HeadGrads) {
    for ((z, &k), gk) in out.logits.iter().zip(&a.discrete).zip(&mut g.logits) {
        for (i, p) in softmax(z).into_iter().enumerate() {
            gk[i] += scale * ((i == k) as u8 as f64 - p);
        }
    }
    for j in 0..out.mean.len() {
        let var = (2.0 * out.log_std[j]).exp();
        let d = a.raw[j] - out.mean[j];
        g.mean[j] += scale * d / var;
        g.log_std[j] += scale * (d * d / var - 1.0);
    }
}

/// Exact for the categorical heads; the Gaussian heads use the entropy of
/// the unsquashed normal.
pub fn entropy(out: &HeadOutputs) -> f64 {
    let mut h = 0.0;
    for z in &out.logits {
        h -= log_softmax(z).iter().map(|l| l.exp() * l).sum::<f64>();
    }
    h + out.log_std.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum::<f64>()
}

pub fn add_entropy_grad(out: &HeadOutputs, scale: f64, g: &mut HeadGrads) {
    for (z, gk) in out.logits.iter().zip(&mut g.logits) {
        let ls = log_softmax(z);
        let h: f64 = -ls.iter().map(|l| l.exp() * l).sum::<f64>();
        for (i, l) in ls.iter().enumerate() {
            gk[i] += scale * (-l.exp() * (l + h));
        }
    }
    for gs in &mut g.log_std {
        *gs += scale;
    }
}

pub fn sample<R: Rng + ?Sized>(out: &HeadOutputs, rng: &mut R) -> SampledAction {
    let mut discrete = Vec::with_capacity(out.logits.len());
    for z in &out.logits {
        let u: f64 = rng.random();
        let p = softmax(z);
        let mut acc = 0.0;
        let mut pick = p.len() - 1;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                pick = i;
                break;
            }
        }
        discrete.push(pick);
    }
    let raw = (0..out.mean.len())
        .map(|j| {
            let e: f64 = rng.sample(StandardNormal);
            out.mean[j] + out.log_std[j].exp() * e
        })
        .collect();
    SampledAction { discrete, raw }
}

/// Most likely category per head and the Gaussian mean.
pub fn mode(out: &HeadOutputs) -> SampledAction {
    let discrete = out
        .logits
        .iter()
        .map(|z| z.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0)
        .collect();
    SampledAction { discrete, raw: out.mean.clone() }
}
