use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::dist::{self, SampledAction};
use super::losses::{a2c_gradients, gae, normalize, ppo_loss, PpoSample};
use super::nn::{Architecture, PolicyNet};
use super::norm::{RewardScaler, RunningNorm};
use super::{AgentAction, Environment, RewardParts};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    A2c,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::A2c => "a2c",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(Algorithm::Ppo),
            "a2c" => Ok(Algorithm::A2c),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm `{s}` (expected ppo or a2c)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    /// Gradient norm ceiling per minibatch step; 0 disables.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            rollout_steps: 2048,
            epochs: 10,
            minibatch: 64,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            vf_coef: 0.5,
            ent_coef: 0.01,
            max_grad_norm: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A2cConfig {
    pub n_steps: usize,
    /// Actor step size.
    pub alpha: f64,
    /// Critic step size.
    pub beta: f64,
    pub gamma: f64,
    pub ent_coef: f64,
    pub optimizer: OptimizerKind,
    pub max_grad_norm: f64,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            n_steps: 24,
            alpha: 7e-4,
            beta: 7e-4,
            gamma: 0.99,
            ent_coef: 0.01,
            optimizer: OptimizerKind::Adam,
            max_grad_norm: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algo: Algorithm,
    pub total_steps: usize,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub normalize_obs: bool,
    /// Scale rewards by the running std of the discounted return before learning.
    pub scale_rewards: bool,
    /// Decay the adaptive optimizer's step size linearly to zero over `total_steps`.
    pub anneal_lr: bool,
    /// Environment steps between learning-curve rows.
    pub log_interval: usize,
    pub ppo: PpoConfig,
    pub a2c: A2cConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algorithm::Ppo,
            total_steps: 200_000,
            hidden: vec![64, 64],
            log_std_init: 0.0,
            normalize_obs: true,
            scale_rewards: true,
            anneal_lr: false,
            log_interval: 2048,
            ppo: PpoConfig::default(),
            a2c: A2cConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.total_steps == 0 || self.log_interval == 0 {
            return bad("total_steps and log_interval must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer widths must be positive");
        }
        let p = &self.ppo;
        if p.rollout_steps == 0 || p.epochs == 0 || p.minibatch == 0 || p.clip <= 0.0 {
            return bad("ppo rollout_steps, epochs, minibatch and clip must be positive");
        }
        if !(0.0..=1.0).contains(&p.gamma) || !(0.0..=1.0).contains(&p.lambda) || !(0.0..=1.0).contains(&self.a2c.gamma) {
            return bad("gamma and lambda must be in [0, 1]");
        }
        if p.learning_rate <= 0.0 || self.a2c.alpha <= 0.0 || self.a2c.beta <= 0.0 || self.a2c.n_steps == 0 {
            return bad("learning rates and a2c n_steps must be positive");
        }
        Ok(())
    }
}

/// Network plus the observation standardizer it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub net: PolicyNet,
    pub norm: Option<RunningNorm>,
}

impl Policy {
    pub fn new(arch: Architecture, seed: u64, cfg: &TrainConfig) -> Self {
        let norm = cfg.normalize_obs.then(|| RunningNorm::new(arch.obs_dim));
        Self { net: PolicyNet::init(arch, seed, cfg.log_std_init), norm }
    }

    pub fn standardize(&self, obs: &[f64]) -> Vec<f64> {
        match &self.norm {
            Some(n) => n.apply(obs),
            None => obs.to_vec(),
        }
    }

    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> SampledAction {
        dist::sample(&self.net.forward(&self.standardize(obs)).out, rng)
    }

    /// Argmax per categorical head, Gaussian mean for the continuous ones.
    pub fn act_deterministic(&self, obs: &[f64]) -> AgentAction {
        dist::mode(&self.net.forward(&self.standardize(obs)).out).to_agent()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.net.forward(&self.standardize(obs)).out.value
    }
}

/// One row of the learning curve: means over the episodes that finished
/// since the previous row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub episodes: usize,
    /// Mean summed episode reward.
    pub mean_reward: f64,
    pub f_volt: f64,
    pub f_ctrl: f64,
    pub f_power: f64,
    /// Mean reward per step over the same episodes.
    pub mean_step_reward: f64,
}

pub fn write_curve_csv<W: std::io::Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "mean_reward", "f_volt", "f_ctrl", "f_power", "episodes", "mean_step_reward"])
        .map_err(csv_err)?;
    for p in curve {
        out.write_record(&[
            p.step.to_string(),
            p.mean_reward.to_string(),
            p.f_volt.to_string(),
            p.f_ctrl.to_string(),
            p.f_power.to_string(),
            p.episodes.to_string(),
            p.mean_step_reward.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(e.to_string())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Final policy, or the last finite one when training diverged.
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
    pub steps: usize,
    pub episodes: usize,
    pub diverged: Option<String>,
}

#[derive(Default)]
struct EpisodeTally {
    ret: f64,
    len: usize,
    parts: RewardParts,
    finished: Vec<(f64, usize, RewardParts)>,
}

impl EpisodeTally {
    fn add(&mut self, r: f64, p: &RewardParts, done: bool) {
        self.ret += r;
        self.len += 1;
        self.parts.f_volt += p.f_volt;
        self.parts.f_ctrl += p.f_ctrl;
        self.parts.f_power += p.f_power;
        if done {
            self.finished.push((self.ret, self.len, std::mem::take(&mut self.parts)));
            self.ret = 0.0;
            self.len = 0;
        }
    }

    fn flush(&mut self, step: usize) -> Option<CurvePoint> {
        if self.finished.is_empty() {
            return None;
        }
        let n = self.finished.len() as f64;
        let mean = |f: &dyn Fn(&(f64, usize, RewardParts)) -> f64| self.finished.iter().map(f).sum::<f64>() / n;
        let p = CurvePoint {
            step,
            episodes: self.finished.len(),
            mean_reward: mean(&|e| e.0),
            f_volt: mean(&|e| e.2.f_volt),
            f_ctrl: mean(&|e| e.2.f_ctrl),
            f_power: mean(&|e| e.2.f_power),
            mean_step_reward: self.finished.iter().map(|e| e.0).sum::<f64>()
                / self.finished.iter().map(|e| e.1).sum::<usize>() as f64,
        };
        self.finished.clear();
        Some(p)
    }
}

struct Rollout {
    obs: Vec<Vec<f64>>,
    actions: Vec<SampledAction>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    last_obs: Vec<f64>,
}

struct Runner<'a, E: Environment> {
    env: &'a mut E,
    rng: ChaCha8Rng,
    seed: u64,
    episode: u64,
    raw_obs: Vec<f64>,
    steps: usize,
    tally: EpisodeTally,
    next_log: usize,
    log_interval: usize,
    curve: Vec<CurvePoint>,
    scaler: Option<RewardScaler>,
}

impl<'a, E: Environment> Runner<'a, E> {
    fn new(env: &'a mut E, seed: u64, log_interval: usize, scaler: Option<RewardScaler>) -> Self {
        let raw_obs = env.reset(episode_seed(seed, 0));
        Self {
            env,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
            seed,
            episode: 0,
            raw_obs,
            steps: 0,
            tally: EpisodeTally::default(),
            next_log: log_interval,
            log_interval,
            curve: Vec::new(),
            scaler,
        }
    }

    /// Collects `n` steps with the current policy; updates the standardizer.
    fn collect(&mut self, policy: &mut Policy, n: usize) -> Rollout {
        let mut r = Rollout {
            obs: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            last_obs: vec![],
        };
        for _ in 0..n {
            if let Some(norm) = &mut policy.norm {
                norm.update(&self.raw_obs);
            }
            let obs = policy.standardize(&self.raw_obs);
            let out = policy.net.forward(&obs).out;
            let action = dist::sample(&out, &mut self.rng);
            let t = self.env.step(&action.to_agent());
            self.steps += 1;
            self.tally.add(t.reward, &t.parts, t.done);
            r.log_probs.push(dist::log_prob(&out, &action));
            r.values.push(out.value);
            r.obs.push(obs);
            r.actions.push(action);
            r.rewards.push(match &mut self.scaler {
                Some(s) => s.scale(t.reward, t.done),
                None => t.reward,
            });
            r.dones.push(t.done);
            self.raw_obs = if t.done {
                self.episode += 1;
                self.env.reset(episode_seed(self.seed, self.episode))
            } else {
                t.obs
            };
            if self.steps >= self.next_log {
                if let Some(p) = self.tally.flush(self.steps) {
                    self.curve.push(p);
                }
                self.next_log += self.log_interval;
            }
        }
        r.last_obs = policy.standardize(&self.raw_obs);
        r
    }
}

fn episode_seed(seed: u64, episode: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(episode)
}

pub fn train<E: Environment>(env: &mut E, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with_progress(env, cfg, seed, &mut |_, _| Ok(()))
}

/// Runs `cfg.algo` for `cfg.total_steps` environment steps. `progress` is
/// called with the current policy after each learning-curve row.
pub fn train_with_progress<E: Environment>(
    env: &mut E,
    cfg: &TrainConfig,
    seed: u64,
    progress: &mut dyn FnMut(&Policy, &CurvePoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = Architecture::new(env.observation_dim(), cfg.hidden.clone(), &env.action_spec());
    let mut policy = Policy::new(arch, seed, cfg);
    let gamma = match cfg.algo {
        Algorithm::Ppo => cfg.ppo.gamma,
        Algorithm::A2c => cfg.a2c.gamma,
    };
    let mut runner = Runner::new(env, seed, cfg.log_interval, cfg.scale_rewards.then(|| RewardScaler::new(gamma)));
    let mut last_finite = policy.clone();
    let mut diverged = None;
    let mut reported = 0;
    let (chunk, mut adam) = match cfg.algo {
        Algorithm::Ppo => (cfg.ppo.rollout_steps, Adam::new(policy.net.params.len(), cfg.ppo.learning_rate)),
        Algorithm::A2c => (cfg.a2c.n_steps, Adam::new(policy.net.params.len(), cfg.a2c.alpha)),
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c);

    let base_lr = adam.lr;
    while runner.steps < cfg.total_steps {
        if cfg.anneal_lr {
            adam.lr = base_lr * (1.0 - runner.steps as f64 / cfg.total_steps as f64);
        }
        let n = chunk.min(cfg.total_steps - runner.steps);
        let roll = runner.collect(&mut policy, n);
        let finite = match cfg.algo {
            Algorithm::Ppo => ppo_update(&mut policy.net, &mut adam, &roll, &cfg.ppo, &mut shuffle_rng),
            Algorithm::A2c => a2c_update(&mut policy.net, &mut adam, &roll, &cfg.a2c),
        };
        if !finite || policy.net.check_finite().is_err() {
            diverged = Some(format!("non-finite loss or weights after {} steps", runner.steps));
            break;
        }
        last_finite = policy.clone();
        while reported < runner.curve.len() {
            progress(&policy, &runner.curve[reported])?;
            reported += 1;
        }
    }
    if diverged.is_none() {
        if let Some(p) = runner.tally.flush(runner.steps) {
            runner.curve.push(p);
        }
        while reported < runner.curve.len() {
            progress(&policy, &runner.curve[reported])?;
            reported += 1;
        }
    }
    Ok(TrainOutcome {
        policy: if diverged.is_some() { last_finite } else { policy },
        curve: runner.curve,
        steps: runner.steps,
        episodes: runner.episode as usize,
        diverged,
    })
}

fn ppo_update(net: &mut PolicyNet, adam: &mut Adam, roll: &Rollout, cfg: &PpoConfig, rng: &mut ChaCha8Rng) -> bool {
    let last_value = net.forward(&roll.last_obs).out.value;
    let adv = gae(&roll.rewards, &roll.values, &roll.dones, last_value, cfg.gamma, cfg.lambda);
    let returns: Vec<f64> = adv.iter().zip(&roll.values).map(|(a, v)| a + v).collect();
    let mut idx: Vec<usize> = (0..roll.rewards.len()).collect();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for mb in idx.chunks(cfg.minibatch) {
            let mut a: Vec<f64> = mb.iter().map(|&i| adv[i]).collect();
            normalize(&mut a);
            let batch: Vec<PpoSample<'_>> = mb
                .iter()
                .zip(&a)
                .map(|(&i, &ai)| PpoSample {
                    obs: &roll.obs[i],
                    action: &roll.actions[i],
                    old_log_prob: roll.log_probs[i],
                    advantage: ai,
                    ret: returns[i],
                })
                .collect();
            let (loss, mut grad) = ppo_loss(net, &batch, cfg.clip, cfg.vf_coef, cfg.ent_coef);
            if !loss.total.is_finite() {
                return false;
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut net.params, &grad);
        }
    }
    true
}

fn a2c_update(net: &mut PolicyNet, adam: &mut Adam, roll: &Rollout, cfg: &A2cConfig) -> bool {
    let last = (!roll.dones.last().copied().unwrap_or(true)).then_some(roll.last_obs.as_slice());
    let g = a2c_gradients(net, &roll.obs, &roll.actions, &roll.rewards, &roll.dones, last, cfg.gamma, cfg.ent_coef);
    if g.td.iter().any(|d| !d.is_finite()) {
        return false;
    }
    apply_a2c_step(net, adam, &g.actor, &g.critic, cfg);
    true
}

/// θ ← θ − α g_actor, ω ← ω − β g_critic (plain), or one adaptive step on
/// g_actor + (β/α) g_critic.
pub fn apply_a2c_step(net: &mut PolicyNet, adam: &mut Adam, actor: &[f64], critic: &[f64], cfg: &A2cConfig) {
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for i in 0..net.params.len() {
                net.params[i] -= cfg.alpha * actor[i] + cfg.beta * critic[i];
            }
        }
        OptimizerKind::Adam => {
            let k = cfg.beta / cfg.alpha;
            let mut g: Vec<f64> = actor.iter().zip(critic).map(|(a, c)| a + k * c).collect();
            clip_grad_norm(&mut g, cfg.max_grad_norm);
            adam.step(&mut net.params, &g);
        }
    }
}
