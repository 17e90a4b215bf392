use super::dist::{add_entropy_grad, add_log_prob_grad, entropy, log_prob, SampledAction};
use super::nn::{HeadGrads, PolicyNet};

pub fn ppo_ratio(log_prob_new: f64, log_prob_old: f64) -> f64 {
    (log_prob_new - log_prob_old).exp()
}

/// min(r·A, clip(r, 1−ε, 1+ε)·A) and its derivative with respect to log π_new.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// One-step TD errors r_t + γ V(s_{t+1}) − V(s_t); the value after a
/// terminal step is zero and `last_value` bootstraps the final step.
pub fn td_errors(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let next = if dones[t] {
                0.0
            } else if t + 1 < n {
                values[t + 1]
            } else {
                last_value
            };
            rewards[t] + gamma * next - values[t]
        })
        .collect()
}

/// Generalized advantage estimates.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let delta = td_errors(rewards, values, dones, last_value, gamma);
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            acc = 0.0;
        }
        acc = delta[t] + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Shifts and scales to zero mean, unit standard deviation.
pub fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return;
    }
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    x.iter_mut().for_each(|v| *v = (*v - m) / (sd + 1e-8));
}

#[derive(Clone, Debug)]
pub struct PpoSample<'a> {
    pub obs: &'a [f64],
    pub action: &'a SampledAction,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLoss {
    /// Mean clipped surrogate (to be maximized).
    pub surrogate: f64,
    /// 0.5 · mean squared error against the returns.
    pub value: f64,
    pub entropy: f64,
    /// −surrogate + vf_coef · value − ent_coef · entropy.
    pub total: f64,
    pub clip_fraction: f64,
}

/// Loss and its parameter gradient over a minibatch.
pub fn ppo_loss(net: &PolicyNet, batch: &[PpoSample<'_>], eps: f64, vf_coef: f64, ent_coef: f64) -> (PpoLoss, Vec<f64>) {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; net.params.len()];
    let mut out = PpoLoss::default();
    let mut clipped = 0usize;
    for s in batch {
        let cache = net.forward(s.obs);
        let o = &cache.out;
        let r = ppo_ratio(log_prob(o, s.action), s.old_log_prob);
        let (surr, dsurr) = clipped_surrogate(r, s.advantage, eps);
        clipped += (dsurr == 0.0 && s.advantage != 0.0) as usize;
        let h = entropy(o);
        let err = o.value - s.ret;
        out.surrogate += surr / n;
        out.value += 0.5 * err * err / n;
        out.entropy += h / n;

        let mut g = HeadGrads::zeros(&net.arch);
        add_log_prob_grad(o, s.action, -dsurr / n, &mut g);
        add_entropy_grad(o, -ent_coef / n, &mut g);
        g.value = vf_coef * err / n;
        net.backward(&cache, &g, &mut grad);
    }
    out.total = -out.surrogate + vf_coef * out.value - ent_coef * out.entropy;
    out.clip_fraction = clipped as f64 / n;
    (out, grad)
}

/// Gradients of one A2C update over a trajectory segment.
#[derive(Clone, Debug, PartialEq)]
pub struct A2cGradients {
    /// Descent direction for the actor: −Σ δ_t ∇ log π(a_t|s_t) − c_H Σ ∇H.
    pub actor: Vec<f64>,
    /// Semi-gradient of Σ δ_t² (the bootstrap target is held fixed).
    pub critic: Vec<f64>,
    pub td: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn a2c_gradients(
    net: &PolicyNet,
    obs: &[Vec<f64>],
    actions: &[SampledAction],
    rewards: &[f64],
    dones: &[bool],
    last_obs: Option<&[f64]>,
    gamma: f64,
    ent_coef: f64,
) -> A2cGradients {
    let caches: Vec<_> = obs.iter().map(|o| net.forward(o)).collect();
    let values: Vec<f64> = caches.iter().map(|c| c.out.value).collect();
    let last_value = last_obs.map(|o| net.forward(o).out.value).unwrap_or(0.0);
    let td = td_errors(rewards, &values, dones, last_value, gamma);
    let mut actor = vec![0.0; net.params.len()];
    let mut critic = vec![0.0; net.params.len()];
    for (t, cache) in caches.iter().enumerate() {
        let mut ga = HeadGrads::zeros(&net.arch);
        add_log_prob_grad(&cache.out, &actions[t], -td[t], &mut ga);
        if ent_coef != 0.0 {
            add_entropy_grad(&cache.out, -ent_coef, &mut ga);
        }
        net.backward(cache, &ga, &mut actor);
        let mut gc = HeadGrads::zeros(&net.arch);
        gc.value = -2.0 * td[t];
        net.backward(cache, &gc, &mut critic);
    }
    A2cGradients { actor, critic, td, values }
}
