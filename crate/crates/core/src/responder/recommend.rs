use serde::{Deserialize, Serialize};

use super::assess::{SystemAssessment, SystemStatus};
use crate::cyber::channel_id;
use crate::env::{action_space, current_setting, RewardBreakdown, VoltVarEnv};
use crate::error::{Error, Result};
use crate::grid::{device_keys, ControlAction, DeviceCommand, DeviceKey};
use crate::rid::{run_rid, RidOptions};
use crate::rl::Policy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponderConfig {
    /// Restrict candidates to the RID-reduced action space.
    pub use_roles: bool,
    pub rid: RidOptions,
    /// Tap offsets tried around the present position by the greedy search.
    pub tap_radius: i32,
    pub battery_levels: Vec<f64>,
    pub greedy_passes: usize,
    pub max_actions: usize,
    /// Search every available device when none in the reduced space lowers
    /// a voltage violation.
    pub relax_roles: bool,
}

impl Default for ResponderConfig {
    fn default() -> Self {
        Self {
            use_roles: true,
            rid: RidOptions::default(),
            tap_radius: 3,
            battery_levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            greedy_passes: 3,
            max_actions: 5,
            relax_roles: true,
        }
    }
}

/// A trained policy and the identifier recorded in provenance.
#[derive(Clone, Debug)]
pub struct PolicyHandle {
    pub policy: Policy,
    pub checkpoint: String,
    pub algo: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Policy,
    Greedy,
    SingleDevice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendedAction {
    /// Only the commands that change a setting.
    pub action: ControlAction,
    pub expected: RewardBreakdown,
    /// Voltages the lookahead power flow predicts.
    pub voltages: Vec<f64>,
    pub source: ActionSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// "policy" or "fallback".
    pub mode: String,
    pub checkpoint: Option<String>,
    pub algo: Option<String>,
    pub roles_used: bool,
    /// The reduced space could not lower a violation, so every available
    /// device was searched.
    #[serde(default)]
    pub roles_relaxed: bool,
    pub essential: Vec<DeviceKey>,
    pub frozen: Vec<DeviceKey>,
    pub unavailable: Vec<DeviceKey>,
    /// Why roles were not applied, when they were requested but RID failed.
    pub rid_error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Overridden,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub id: u64,
    pub scenario: String,
    pub hour: usize,
    pub assessment: SystemAssessment,
    /// Sorted by expected total reward, best first.
    pub actions: Vec<RecommendedAction>,
    pub no_action: RewardBreakdown,
    pub provenance: Provenance,
    /// Set once the operator responds.
    pub verdict: Option<Verdict>,
}

impl Recommendation {
    pub fn top(&self) -> Option<&RecommendedAction> {
        self.actions.first()
    }
}

fn key_of_channel(env: &VoltVarEnv, ch: &str) -> Option<DeviceKey> {
    device_keys(env.network()).into_iter().find(|k| channel_id(*k) == ch)
}

fn delta(env: &VoltVarEnv, full: &ControlAction) -> ControlAction {
    let net = env.network();
    ControlAction::new(full.commands.iter().filter(|c| current_setting(net, c.device_key()) != **c).cloned().collect())
}

fn candidate_settings(env: &VoltVarEnv, key: DeviceKey, cfg: &ResponderConfig) -> Vec<DeviceCommand> {
    let net = env.network();
    match (key, current_setting(net, key)) {
        (DeviceKey::Capacitor(id), DeviceCommand::Capacitor { on, .. }) => vec![DeviceCommand::Capacitor { id, on: !on }],
        (DeviceKey::Transformer(id), DeviceCommand::Transformer { tap, .. }) => {
            let t = &net.transformers[net.transformer_index(id).expect("known transformer")];
            (-cfg.tap_radius..=cfg.tap_radius)
                .map(|d| tap + d)
                .filter(|&p| p != tap && t.in_range(p))
                .map(|p| DeviceCommand::Transformer { id, tap: p })
                .collect()
        }
        (DeviceKey::Battery(id), DeviceCommand::Battery { power, .. }) => cfg
            .battery_levels
            .iter()
            .filter(|&&p| p != power)
            .map(|&p| DeviceCommand::Battery { id, power: p })
            .collect(),
        _ => vec![],
    }
}

fn with_command(base: &ControlAction, cmd: DeviceCommand) -> ControlAction {
    let mut cmds: Vec<DeviceCommand> = base.commands.iter().filter(|c| c.device_key() != cmd.device_key()).cloned().collect();
    cmds.push(cmd);
    ControlAction::new(cmds)
}

#[derive(Clone, Copy, PartialEq)]
enum Objective {
    Total,
    /// Violation first, total reward as tie-break.
    VoltageFirst,
}

fn better(a: &RewardBreakdown, b: &RewardBreakdown, obj: Objective) -> bool {
    let by_total = a.total > b.total + 1e-12;
    match obj {
        Objective::Total => by_total,
        Objective::VoltageFirst => a.f_volt < b.f_volt - 1e-12 || ((a.f_volt - b.f_volt).abs() <= 1e-12 && by_total),
    }
}

/// Coordinate search: one device at a time, keep any change that improves
/// the lookahead reward.
fn greedy(env: &VoltVarEnv, free: &[DeviceKey], cfg: &ResponderConfig, obj: Objective) -> Result<ControlAction> {
    let mut best = ControlAction::default();
    let mut best_r = env.lookahead(&best)?.0;
    for _ in 0..cfg.greedy_passes {
        let mut improved = false;
        for &key in free {
            for cmd in candidate_settings(env, key, cfg) {
                let trial = with_command(&best, cmd);
                let r = env.lookahead(&trial)?.0;
                if better(&r, &best_r, obj) {
                    best = trial;
                    best_r = r;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

/// Policy pick (restricted to `free`), greedy searches and the best single
/// move per device, each verified by lookahead; duplicates dropped.
fn search(
    env: &VoltVarEnv,
    free: &[DeviceKey],
    policy_action: Option<&ControlAction>,
    cfg: &ResponderConfig,
    violated: bool,
) -> Result<Vec<RecommendedAction>> {
    let mut candidates: Vec<(ControlAction, ActionSource)> = Vec::new();
    if let Some(a) = policy_action {
        let kept = a.commands.iter().filter(|c| free.contains(&c.device_key())).cloned().collect();
        candidates.push((ControlAction::new(kept), ActionSource::Policy));
    }
    let obj = if violated { Objective::VoltageFirst } else { Objective::Total };
    candidates.push((greedy(env, free, cfg, Objective::Total)?, ActionSource::Greedy));
    if violated {
        candidates.push((greedy(env, free, cfg, Objective::VoltageFirst)?, ActionSource::Greedy));
    }
    for &key in free {
        let mut best: Option<(ControlAction, RewardBreakdown)> = None;
        for cmd in candidate_settings(env, key, cfg) {
            let a = ControlAction::new(vec![cmd]);
            let r = env.lookahead(&a)?.0;
            if best.as_ref().is_none_or(|(_, b)| better(&r, b, obj)) {
                best = Some((a, r));
            }
        }
        if let Some((a, _)) = best {
            candidates.push((a, ActionSource::SingleDevice));
        }
    }

    let mut actions: Vec<RecommendedAction> = Vec::new();
    for (a, source) in candidates {
        let action = delta(env, &env.effective_action(&a)?);
        if actions.iter().any(|x| x.action == action) {
            continue;
        }
        let (expected, sol) = env.lookahead(&action)?;
        actions.push(RecommendedAction { action, expected, voltages: sol.vm, source });
    }
    Ok(actions)
}

/// Builds a recommendation for an abnormal state of `env`.
pub fn respond(
    assessment: &SystemAssessment,
    env: &VoltVarEnv,
    policy: Option<&PolicyHandle>,
    cfg: &ResponderConfig,
    id: u64,
) -> Result<Recommendation> {
    if assessment.status == SystemStatus::Normal {
        return Err(Error::NormalState);
    }
    let net = env.network();
    let mut unavailable = env.unavailable_devices();
    for ch in env.cyber().alarmed_devices() {
        if let Some(k) = key_of_channel(env, &ch) {
            if !unavailable.contains(&k) {
                unavailable.push(k);
            }
        }
    }
    for k in &env.contingency().blocked_devices {
        if !unavailable.contains(k) {
            unavailable.push(*k);
        }
    }
    unavailable.sort();

    let (mut roles_used, mut essential, mut frozen, mut rid_error) = (false, vec![], env.space().frozen.clone(), None);
    if cfg.use_roles {
        match run_rid(net, env.loads(), &unavailable, &cfg.rid).and_then(|(_, roles, _)| {
            let space = action_space(net, Some(&roles))?;
            Ok((roles, space))
        }) {
            Ok((roles, space)) => {
                roles_used = true;
                essential = roles.essential.clone();
                for k in space.frozen {
                    if !frozen.contains(&k) {
                        frozen.push(k);
                    }
                }
            }
            Err(e) => rid_error = Some(e.to_string()),
        }
    }
    frozen.sort();
    let free: Vec<DeviceKey> =
        device_keys(net).into_iter().filter(|k| !frozen.contains(k) && !unavailable.contains(k)).collect();

    let mut mode = "fallback";
    let mut policy_action = None;
    if let Some(h) = policy {
        let obs = env.features();
        if h.policy.net.arch.obs_dim == obs.len() && h.policy.net.arch.action_spec() == crate::rl::Environment::action_spec(env) {
            policy_action = Some(env.decode(&h.policy.act_deterministic(&obs)));
            mode = "policy";
        }
    }
    let violated = !assessment.evidence.violated_buses.is_empty();
    let no_action = env.lookahead(&ControlAction::default())?.0;
    let reduces = |a: &RecommendedAction| a.expected.f_volt < no_action.f_volt - 1e-12;

    let mut actions = search(env, &free, policy_action.as_ref(), cfg, violated)?;
    // RID ignores direction: an essential capacitor that is already off cannot
    // pull an overvoltage down. Widen to every available device then.
    let mut roles_relaxed = false;
    if cfg.relax_roles && violated && roles_used && !actions.iter().any(reduces) {
        let wide: Vec<DeviceKey> = device_keys(net)
            .into_iter()
            .filter(|k| !env.space().frozen.contains(k) && !unavailable.contains(k))
            .collect();
        if wide.len() > free.len() {
            let more = search(env, &wide, policy_action.as_ref(), cfg, violated)?;
            if more.iter().any(reduces) {
                actions = more;
                roles_relaxed = true;
            }
        }
    }
    // with violations present, only actions that reduce them are offered
    if violated && actions.iter().any(reduces) {
        actions.retain(reduces);
    }
    // the policy's pick leads ties
    actions.sort_by(|a, b| b.expected.total.total_cmp(&a.expected.total));
    actions.truncate(cfg.max_actions.max(1));

    let provenance = Provenance {
        mode: mode.to_string(),
        checkpoint: policy.filter(|_| mode == "policy").map(|h| h.checkpoint.clone()),
        algo: policy.filter(|_| mode == "policy").map(|h| h.algo.clone()),
        roles_used,
        roles_relaxed,
        essential,
        frozen,
        unavailable,
        rid_error,
    };
    Ok(Recommendation {
        id,
        scenario: env.scenario().to_string(),
        hour: env.state().hour,
        assessment: assessment.clone(),
        actions,
        no_action,
        provenance,
        verdict: None,
    })
}
