//! Shared plumbing for training runs and evaluation episodes, used by the
//! command line and the acceptance suite alike.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::cyber::channel_id;
use crate::env::{StepRecord, VoltVarEnv};
use crate::error::Result;
use crate::grid::{device_keys, ControlAction, DeviceKey, PowerNetwork};
use crate::rid::{run_rid, ControllerRoles, RidOptions, RidReport};
use crate::rl::{CurvePoint, Policy};

/// Evaluation seeds start here so they never collide with training seeds.
pub const EVAL_SEED_BASE: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub episode_rewards: Vec<f64>,
    /// Per-episode means of the three cost terms.
    pub f_volt: f64,
    pub f_ctrl: f64,
    pub f_power: f64,
    /// Fraction of steps with every bus voltage inside the band.
    pub in_band_fraction: f64,
    /// Steps on which each device's state changed, keyed by device name.
    pub changes: BTreeMap<String, usize>,
}

/// Runs `episodes` episodes choosing actions with `choose`; returns the
/// summary and every step record.
pub fn evaluate(
    env: &mut VoltVarEnv,
    episodes: usize,
    seed_base: u64,
    band: (f64, f64),
    choose: &mut dyn FnMut(&VoltVarEnv) -> ControlAction,
) -> Result<(EvalSummary, Vec<Vec<StepRecord>>)> {
    let keys = device_keys(env.network());
    let mut changes: BTreeMap<String, usize> = keys.iter().map(|k| (k.to_string(), 0)).collect();
    let (mut rewards, mut logs) = (Vec::new(), Vec::new());
    let (mut fv, mut fc, mut fp) = (0.0, 0.0, 0.0);
    let (mut steps, mut in_band) = (0usize, 0usize);
    for ep in 0..episodes {
        env.reset_state(seed_base + ep as u64)?;
        let mut total = 0.0;
        let mut log = Vec::new();
        loop {
            let prev = env.state().clone();
            let action = choose(env);
            let out = env.step_action(&action)?;
            total += out.reward.total;
            fv += out.reward.f_volt;
            fc += out.reward.f_ctrl;
            fp += out.reward.f_power;
            steps += 1;
            in_band += out.state.all_voltages_within(band.0, band.1) as usize;
            for (k, key) in keys.iter().enumerate() {
                if state_changed(env.network(), &prev, &out.state, k) {
                    *changes.get_mut(&key.to_string()).expect("known device") += 1;
                }
            }
            log.push(out.record);
            if out.done {
                break;
            }
        }
        rewards.push(total);
        logs.push(log);
    }
    let n = episodes.max(1) as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let summary = EvalSummary {
        episodes,
        mean_reward: mean,
        std_reward: var.sqrt(),
        episode_rewards: rewards,
        f_volt: fv / n,
        f_ctrl: fc / n,
        f_power: fp / n,
        in_band_fraction: in_band as f64 / steps.max(1) as f64,
        changes,
    };
    Ok((summary, logs))
}

// Index `k` runs over `device_keys` order: capacitors, taps, batteries.
fn state_changed(net: &PowerNetwork, a: &crate::env::GridState, b: &crate::env::GridState, k: usize) -> bool {
    let (nc, nt) = (net.capacitors.len(), net.transformers.len());
    if k < nc {
        a.capacitors[k] != b.capacitors[k]
    } else if k < nc + nt {
        a.taps[k - nc] != b.taps[k - nc]
    } else {
        let j = k - nc - nt;
        a.soc[j] != b.soc[j] || b.battery_power[j] != 0.0
    }
}

/// Deterministic evaluation of a trained policy.
pub fn evaluate_policy(
    env: &mut VoltVarEnv,
    policy: &Policy,
    episodes: usize,
    band: (f64, f64),
) -> Result<(EvalSummary, Vec<Vec<StepRecord>>)> {
    evaluate(env, episodes, EVAL_SEED_BASE, band, &mut |e| e.decode(&policy.act_deterministic(&e.features())))
}

/// Devices whose channel the scenario blocks at the start of an episode.
pub fn blocked_at_start(env: &VoltVarEnv) -> Vec<DeviceKey> {
    let mut out: Vec<DeviceKey> = device_keys(env.network())
        .into_iter()
        .filter(|k| env.cyber().is_blocked(&channel_id(*k), 0.0) || env.contingency().blocked_devices.contains(k))
        .collect();
    out.sort();
    out
}

/// The environment a run trains in. With `use_rid`, roles come from the
/// contingency network at nominal load and redundant devices are frozen.
pub fn build_env(cfg: &RunConfig) -> Result<(VoltVarEnv, Option<ControllerRoles>)> {
    let env = VoltVarEnv::new(cfg.network()?, cfg.scenario, cfg.env.clone())?;
    if !cfg.use_rid {
        return Ok((env, None));
    }
    let roles = rid_report(&env, "", &cfg.rid)?.roles;
    let env = env.with_roles(&roles)?;
    Ok((env, Some(roles)))
}

/// RID on the scenario's contingency network at nominal load, with the
/// channels blocked at onset excluded.
pub fn rid_report(env: &VoltVarEnv, case: &str, opts: &RidOptions) -> Result<RidReport> {
    let unavailable = blocked_at_start(env);
    let nominal = vec![1.0; env.network().bus_count()];
    let (sensitivity, roles, targets_from_violations) = run_rid(env.network(), &nominal, &unavailable, opts)?;
    Ok(RidReport {
        case: case.to_string(),
        scenario: env.scenario().to_string(),
        targets_from_violations,
        sensitivity,
        roles,
        unavailable,
    })
}

/// Mean reward of the last `window` curve rows.
pub fn final_level(curve: &[CurvePoint], window: usize) -> Option<f64> {
    if curve.is_empty() {
        return None;
    }
    let tail = &curve[curve.len().saturating_sub(window.max(1))..];
    Some(tail.iter().map(|p| p.mean_reward).sum::<f64>() / tail.len() as f64)
}

/// First step at which the trailing `window`-row mean of the curve reaches `level`.
pub fn steps_to_level(curve: &[CurvePoint], level: f64, window: usize) -> Option<usize> {
    let w = window.max(1);
    (0..curve.len()).find_map(|i| {
        let lo = (i + 1).saturating_sub(w);
        let rows = &curve[lo..=i];
        let m = rows.iter().map(|p| p.mean_reward).sum::<f64>() / rows.len() as f64;
        (rows.len() == w && m >= level).then_some(curve[i].step)
    })
}
