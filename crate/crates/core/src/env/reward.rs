use serde::{Deserialize, Serialize};

use super::GridState;
use crate::grid::{DeviceKey, PowerFlowSolution, PowerNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_cap: f64,
    pub w_reg: f64,
    pub w_dis: f64,
    pub w_soc: f64,
    pub w_power: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub soc_b0: f64,
    /// Floor on f_volt when the power flow does not converge.
    pub collapse_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_cap: 1.0,
            w_reg: 1.0,
            w_dis: 0.5,
            w_soc: 0.5,
            w_power: 1.0,
            v_lo: 0.95,
            v_hi: 1.05,
            soc_b0: 0.5,
            collapse_penalty: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub f_volt: f64,
    pub f_ctrl: f64,
    pub f_power: f64,
    pub total: f64,
    /// f_ctrl split by device.
    pub ctrl_terms: Vec<(DeviceKey, f64)>,
}

impl RewardBreakdown {
    pub fn from_terms(f_volt: f64, f_power: f64, ctrl_terms: Vec<(DeviceKey, f64)>) -> Self {
        let f_ctrl = ctrl_terms.iter().map(|(_, v)| v).sum();
        // written as a subtraction so a quiet step is +0, not -0
        Self { f_volt, f_ctrl, f_power, total: 0.0 - (f_volt + f_ctrl + f_power), ctrl_terms }
    }

    /// Term-wise mean of several breakdowns.
    pub fn mean(parts: &[RewardBreakdown]) -> RewardBreakdown {
        let n = parts.len() as f64;
        let avg = |f: fn(&RewardBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / n;
        let ctrl_terms = parts[0]
            .ctrl_terms
            .iter()
            .enumerate()
            .map(|(k, (d, _))| (*d, parts.iter().map(|p| p.ctrl_terms[k].1).sum::<f64>() / n))
            .collect();
        let (f_volt, f_power) = (avg(|p| p.f_volt), avg(|p| p.f_power));
        RewardBreakdown::from_terms(f_volt, f_power, ctrl_terms)
    }
}

/// Sum of hinge excursions outside `[lo, hi]`.
pub fn voltage_violation(vm: &[f64], lo: f64, hi: f64) -> f64 {
    vm.iter().map(|&v| (v - hi).max(0.0) + (lo - v).max(0.0)).sum()
}

/// Control cost of moving from `prev` to `next`: status flips, tap moves,
/// battery power relative to its rating, and the SoC drift of the state
/// the action was taken in.
pub fn control_terms(net: &PowerNetwork, prev: &GridState, next: &GridState, w: &RewardWeights) -> Vec<(DeviceKey, f64)> {
    let mut out = Vec::new();
    for (k, c) in net.capacitors.iter().enumerate() {
        let d = (prev.capacitors[k] as i32 - next.capacitors[k] as i32).abs() as f64;
        out.push((DeviceKey::Capacitor(c.id), w.w_cap * d));
    }
    for (k, t) in net.transformers.iter().enumerate() {
        let d = (prev.taps[k] - next.taps[k]).abs() as f64;
        out.push((DeviceKey::Transformer(t.id), w.w_reg * d));
    }
    for (k, b) in net.batteries.iter().enumerate() {
        let dis = next.battery_power[k].abs();
        let drift = (prev.soc[k] - w.soc_b0).abs();
        out.push((DeviceKey::Battery(b.id), w.w_dis * dis + w.w_soc * drift));
    }
    out
}

pub fn compute_reward(
    net: &PowerNetwork,
    prev: &GridState,
    next: &GridState,
    sol: &PowerFlowSolution,
    w: &RewardWeights,
) -> RewardBreakdown {
    let ctrl = control_terms(net, prev, next, w);
    if !sol.converged {
        return RewardBreakdown::from_terms(w.collapse_penalty, 0.0, ctrl);
    }
    let f_volt = voltage_violation(&sol.vm, w.v_lo, w.v_hi);
    let f_power = if sol.p_total_mw > 0.0 { w.w_power * sol.p_loss_mw / sol.p_total_mw } else { 0.0 };
    RewardBreakdown::from_terms(f_volt, f_power, ctrl)
}
