//! Hourly Volt-Var control MDP over a power network, with actuation routed
//! through the simulated SCADA channels.

mod profile;
mod reward;

pub use profile::{draw_loads, profile};
pub use reward::{compute_reward, control_terms, voltage_violation, RewardBreakdown, RewardWeights};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cyber::{channel_id, CyberParams, CyberSim, Delivery, DosAttack};
use crate::error::{Error, Result};
use crate::fusion::TelemetryFrame;
use crate::grid::{
    apply_device_settings, device_keys, CaseId, solve_power_flow, ControlAction, DeviceCommand, DeviceKey, PowerFlowSolution,
    PowerNetwork,
};
use crate::rid::ControllerRoles;
use crate::rl::{ActionSpec, AgentAction, Environment, RewardParts, Transition};

pub const EPISODE_HOURS: usize = 24;
const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Normal,
    /// Transformer between buses 3 and 24 out.
    Uc1,
    /// UC1 plus the generator at bus 22 out.
    Uc2,
    /// Battery 1 command channel blocked by a DoS attack.
    Wscc9Dos,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Normal, Scenario::Uc1, Scenario::Uc2, Scenario::Wscc9Dos];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Normal => "normal",
            Scenario::Uc1 => "uc1",
            Scenario::Uc2 => "uc2",
            Scenario::Wscc9Dos => "wscc9_dos",
        }
    }

    /// The builtin case a scenario is defined on; `None` for `normal`.
    pub fn native_case(self) -> Option<CaseId> {
        match self {
            Scenario::Normal => None,
            Scenario::Uc1 | Scenario::Uc2 => Some(CaseId::Ieee24Augmented),
            Scenario::Wscc9Dos => Some(CaseId::Wscc9Augmented),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// What a scenario changed in the plant and in the communication layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub scenario: Scenario,
    pub outaged_branches: Vec<(u32, u32)>,
    pub outaged_generators: Vec<u32>,
    /// Devices whose command channel is fully blocked.
    pub blocked_devices: Vec<DeviceKey>,
    pub attacks: Vec<DosAttack>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub weights: RewardWeights,
    /// Lower bound of the per-bus uniform load multiplier.
    pub load_multiplier_min: f64,
    pub draws_per_step: usize,
    pub cyber: CyberParams,
    /// Intensity of the attack on battery 1 in `wscc9_dos`.
    pub dos_intensity: f64,
    /// Intensity of the intrusion traffic on the substation RTUs in UC1/UC2.
    pub uc_rtu_intensity: f64,
    /// Additional attacks appended to the scenario's own.
    pub extra_attacks: Vec<DosAttack>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            load_multiplier_min: 0.8,
            draws_per_step: 3,
            cyber: CyberParams::default(),
            dos_intensity: 1.0,
            uc_rtu_intensity: 0.5,
            extra_attacks: Vec::new(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.load_multiplier_min) {
            return Err(Error::Config("load_multiplier_min must be in [0, 1]".into()));
        }
        if self.draws_per_step == 0 {
            return Err(Error::Config("draws_per_step must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dos_intensity) || !(0.0..=1.0).contains(&self.uc_rtu_intensity) {
            return Err(Error::Config("attack intensities must be in [0, 1]".into()));
        }
        self.cyber.validate()
    }
}

/// Applies a scenario's contingency to a case.
pub fn apply_scenario(net: &PowerNetwork, scenario: Scenario, cfg: &EnvConfig) -> Result<(PowerNetwork, Contingency)> {
    let horizon = EPISODE_HOURS as f64 * SECONDS_PER_HOUR;
    let whole = |targets: Vec<String>, intensity: f64| DosAttack { targets, start_s: 0.0, duration_s: horizon, intensity };
    let mut c = Contingency {
        scenario,
        outaged_branches: vec![],
        outaged_generators: vec![],
        blocked_devices: vec![],
        attacks: vec![],
    };
    let out = match scenario {
        Scenario::Normal => net.clone(),
        Scenario::Uc1 | Scenario::Uc2 => {
            let mut n = net.with_branch_outage(3, 24)?;
            c.outaged_branches.push((3, 24));
            let mut rtus = vec!["rtu:3".to_string(), "rtu:24".to_string()];
            if scenario == Scenario::Uc2 {
                n = n.with_generator_outage(22)?;
                c.outaged_generators.push(22);
                rtus.push("rtu:22".to_string());
            }
            c.attacks.push(whole(rtus, cfg.uc_rtu_intensity));
            n
        }
        Scenario::Wscc9Dos => {
            let key = DeviceKey::Battery(1);
            if !key.exists_in(net) {
                return Err(Error::UnknownDevice("battery 1".into()));
            }
            c.attacks.push(whole(vec![channel_id(key)], cfg.dos_intensity));
            if cfg.dos_intensity >= 1.0 {
                c.blocked_devices.push(key);
            }
            net.clone()
        }
    };
    c.attacks.extend(cfg.extra_attacks.iter().cloned());
    Ok((out, c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub voltages: Vec<f64>,
    pub capacitors: Vec<u8>,
    pub taps: Vec<i32>,
    pub soc: Vec<f64>,
    /// Effective normalized battery power over the last period.
    pub battery_power: Vec<f64>,
    pub hour: usize,
    pub contingency: Contingency,
}

impl GridState {
    fn capture(net: &PowerNetwork, sol: &PowerFlowSolution, hour: usize, contingency: &Contingency) -> Self {
        GridState {
            voltages: sol.vm.clone(),
            capacitors: net.capacitors.iter().map(|c| c.on as u8).collect(),
            taps: net.transformers.iter().map(|t| t.tap).collect(),
            soc: net.batteries.iter().map(|b| b.soc).collect(),
            battery_power: net.batteries.iter().map(|b| b.power).collect(),
            hour,
            contingency: contingency.clone(),
        }
    }

    pub fn all_voltages_within(&self, lo: f64, hi: f64) -> bool {
        self.voltages.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpaceDescriptor {
    pub devices: Vec<DeviceKey>,
    pub controllable: Vec<DeviceKey>,
    pub frozen: Vec<DeviceKey>,
    pub dim_before: usize,
    pub dim_after: usize,
    pub reduction_ratio: f64,
}

/// All devices are controllable unless roles mark them redundant.
pub fn action_space(net: &PowerNetwork, roles: Option<&ControllerRoles>) -> Result<ActionSpaceDescriptor> {
    let devices = device_keys(net);
    let frozen: Vec<DeviceKey> = match roles {
        None => vec![],
        Some(r) => {
            if let Some(bad) = r.controllers.iter().find(|k| !k.exists_in(net)) {
                return Err(Error::UnknownDevice(bad.to_string()));
            }
            devices.iter().copied().filter(|k| r.is_redundant(*k)).collect()
        }
    };
    let controllable: Vec<DeviceKey> = devices.iter().copied().filter(|k| !frozen.contains(k)).collect();
    let n = devices.len();
    Ok(ActionSpaceDescriptor {
        dim_before: n,
        dim_after: controllable.len(),
        reduction_ratio: if n == 0 { 0.0 } else { frozen.len() as f64 / n as f64 },
        devices,
        controllable,
        frozen,
    })
}

/// Per-step log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub hour: usize,
    pub action: ControlAction,
    pub voltages: Vec<f64>,
    pub reward: RewardSummary,
    pub blocked_devices: Vec<DeviceKey>,
    pub rtt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub f_volt: f64,
    pub f_ctrl: f64,
    pub f_power: f64,
    pub total: f64,
}

impl From<&RewardBreakdown> for RewardSummary {
    fn from(r: &RewardBreakdown) -> Self {
        Self { f_volt: r.f_volt, f_ctrl: r.f_ctrl, f_power: r.f_power, total: r.total }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: GridState,
    /// Mean over the load draws.
    pub reward: RewardBreakdown,
    pub draws: Vec<RewardBreakdown>,
    pub done: bool,
    /// Devices whose command was dropped this step.
    pub blocked: Vec<DeviceKey>,
    /// Settings that actually reached the plant.
    pub applied: ControlAction,
    pub record: StepRecord,
}

#[derive(Clone, Debug)]
pub struct VoltVarEnv {
    cfg: EnvConfig,
    base: PowerNetwork,
    scenario: Scenario,
    contingency: Contingency,
    space: ActionSpaceDescriptor,
    net: PowerNetwork,
    rng: ChaCha8Rng,
    cyber: CyberSim,
    state: GridState,
    solution: PowerFlowSolution,
    /// Per-bus load scale behind `solution`.
    loads: Vec<f64>,
    rtt_ms: f64,
    rtt_window: Vec<f64>,
}

impl VoltVarEnv {
    pub fn new(base: PowerNetwork, scenario: Scenario, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        base.validate()?;
        let (net, contingency) = apply_scenario(&base, scenario, &cfg)?;
        let space = action_space(&net, None)?;
        let cyber = CyberSim::new(cfg.cyber.clone(), &[], vec![], 0)?;
        let solution = solve_power_flow(&net, &vec![1.0; net.bus_count()]);
        let state = GridState::capture(&net, &solution, 0, &contingency);
        let mut env = Self {
            cfg,
            base,
            scenario,
            contingency,
            space,
            net,
            rng: ChaCha8Rng::seed_from_u64(0),
            cyber,
            state,
            solution,
            loads: vec![],
            rtt_ms: 0.0,
            rtt_window: vec![],
        };
        env.reset_state(0)?;
        Ok(env)
    }

    /// Freezes the devices `roles` marks redundant.
    pub fn with_roles(mut self, roles: &ControllerRoles) -> Result<Self> {
        self.space = action_space(&self.net, Some(roles))?;
        Ok(self)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }
    pub fn scenario(&self) -> Scenario {
        self.scenario
    }
    pub fn contingency(&self) -> &Contingency {
        &self.contingency
    }
    pub fn state(&self) -> &GridState {
        &self.state
    }
    /// Plant as it stands now: contingency and current device settings.
    pub fn network(&self) -> &PowerNetwork {
        &self.net
    }
    /// The case before the contingency.
    pub fn base_network(&self) -> &PowerNetwork {
        &self.base
    }
    pub fn solution(&self) -> &PowerFlowSolution {
        &self.solution
    }
    pub fn space(&self) -> &ActionSpaceDescriptor {
        &self.space
    }
    pub fn cyber(&self) -> &CyberSim {
        &self.cyber
    }
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }
    /// Simulation clock, s.
    pub fn now(&self) -> f64 {
        self.state.hour as f64 * SECONDS_PER_HOUR
    }
    /// Devices the action space freezes plus those whose channel is blocked now.
    pub fn unavailable_devices(&self) -> Vec<DeviceKey> {
        let now = self.now();
        device_keys(&self.net)
            .into_iter()
            .filter(|k| self.space.frozen.contains(k) || self.cyber.is_blocked(&channel_id(*k), now))
            .collect()
    }

    /// Settings `action` would leave in place: frozen or blocked devices hold.
    pub fn effective_action(&self, action: &ControlAction) -> Result<ControlAction> {
        action.validate(&self.net)?;
        let unavailable = self.unavailable_devices();
        let cmds = device_keys(&self.net)
            .into_iter()
            .map(|key| {
                let requested = action.commands.iter().rev().find(|c| c.device_key() == key);
                match requested {
                    Some(c) if !unavailable.contains(&key) => c.clone(),
                    _ => current_setting(&self.net, key),
                }
            })
            .collect();
        Ok(ControlAction::new(cmds))
    }

    /// Reward and power flow if `action` were applied at the present loading,
    /// with no cyber randomness and no hour advance.
    pub fn lookahead(&self, action: &ControlAction) -> Result<(RewardBreakdown, PowerFlowSolution)> {
        let applied = self.effective_action(action)?;
        let next_net = apply_device_settings(&self.net, &applied)?;
        let sol = solve_power_flow(&next_net, &self.loads);
        let next_state = GridState::capture(&next_net, &sol, self.state.hour, &self.contingency);
        let reward = compute_reward(&next_net, &self.state, &next_state, &sol, &self.cfg.weights);
        Ok((reward, sol))
    }

    /// Most recent step-poll RTTs, ms (timeouts at the timeout value).
    pub fn rtt_window(&self) -> &[f64] {
        &self.rtt_window
    }

    fn channels(&self) -> Vec<String> {
        let mut ch: Vec<String> = device_keys(&self.net).into_iter().map(channel_id).collect();
        for a in &self.contingency.attacks {
            for t in &a.targets {
                if !ch.contains(t) {
                    ch.push(t.clone());
                }
            }
        }
        ch
    }

    pub fn reset_state(&mut self, seed: u64) -> Result<&GridState> {
        let (mut net, _) = apply_scenario(&self.base, self.scenario, &self.cfg)?;
        for b in &mut net.batteries {
            b.soc = self.cfg.weights.soc_b0;
        }
        self.net = net;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = self.channels();
        self.cyber = CyberSim::new(
            self.cfg.cyber.clone(),
            &channels,
            self.contingency.attacks.clone(),
            seed ^ 0x9e37_79b9_7f4a_7c15,
        )?;
        let loads = draw_loads(&mut self.rng, self.net.bus_count(), 0, self.cfg.load_multiplier_min);
        self.solution = solve_power_flow(&self.net, &loads);
        self.loads = loads;
        self.state = GridState::capture(&self.net, &self.solution, 0, &self.contingency);
        self.rtt_ms = 0.0;
        self.rtt_window.clear();
        Ok(&self.state)
    }

    /// Applies `action` for the current hour and advances one hour.
    pub fn step_action(&mut self, action: &ControlAction) -> Result<StepOutcome> {
        action.validate(&self.net)?;
        let hour = self.state.hour;
        let t0 = hour as f64 * SECONDS_PER_HOUR;

        let mut blocked = Vec::new();
        let mut applied = Vec::new();
        for key in device_keys(&self.net) {
            let current = current_setting(&self.net, key);
            let requested = action.commands.iter().rev().find(|c| c.device_key() == key).cloned();
            let setting = match requested {
                Some(cmd) if cmd != current && !self.space.frozen.contains(&key) => {
                    match self.cyber.send_command(&channel_id(key), t0)? {
                        Delivery::Delivered { .. } => cmd,
                        Delivery::Dropped => {
                            blocked.push(key);
                            current
                        }
                    }
                }
                _ => current,
            };
            applied.push(setting);
        }
        let applied = ControlAction::new(applied);
        let next_net = apply_device_settings(&self.net, &applied)?;

        let polls = 1 + self.cfg.cyber.background_polls;
        let spacing = SECONDS_PER_HOUR / (polls + 1) as f64;
        let timeout = self.cfg.cyber.timeout_ms;
        let mut step_rtts = Vec::new();
        for ch in self.channels() {
            for k in 0..polls {
                let r = self.cyber.poll_rtt(&ch, t0 + (k + 1) as f64 * spacing)?.unwrap_or(timeout);
                if k == 0 {
                    step_rtts.push(r);
                }
            }
        }
        self.rtt_ms = step_rtts.iter().copied().fold(0.0, f64::max);
        self.rtt_window = step_rtts;

        let next_hour = hour + 1;
        let mut draws = Vec::with_capacity(self.cfg.draws_per_step);
        let mut first = None;
        let mut first_loads = Vec::new();
        for d in 0..self.cfg.draws_per_step {
            let loads = draw_loads(&mut self.rng, next_net.bus_count(), next_hour, self.cfg.load_multiplier_min);
            let sol = solve_power_flow(&next_net, &loads);
            let next_state = GridState::capture(&next_net, &sol, next_hour, &self.contingency);
            draws.push(compute_reward(&next_net, &self.state, &next_state, &sol, &self.cfg.weights));
            if d == 0 {
                first = Some((next_state, sol));
                first_loads = loads;
            }
        }
        let (next_state, sol) = first.expect("at least one draw");
        let reward = RewardBreakdown::mean(&draws);
        let record = StepRecord {
            hour,
            action: action.clone(),
            voltages: next_state.voltages.clone(),
            reward: RewardSummary::from(&reward),
            blocked_devices: blocked.clone(),
            rtt: self.rtt_ms,
        };
        self.net = next_net;
        self.state = next_state;
        self.solution = sol;
        self.loads = first_loads;
        Ok(StepOutcome {
            state: self.state.clone(),
            reward,
            draws,
            done: next_hour >= EPISODE_HOURS,
            blocked,
            applied,
            record,
        })
    }

    /// Current telemetry: voltages, angles and branch currents of the state's
    /// solution plus the latest RTT.
    pub fn telemetry(&self) -> TelemetryFrame {
        TelemetryFrame {
            vm: self.solution.vm.clone(),
            va: self.solution.va.clone(),
            branch_current: self.solution.branch_current.clone(),
            rtt_ms: self.rtt_ms,
            label: None,
            t: self.state.hour as f64 * SECONDS_PER_HOUR,
            scenario: self.scenario.to_string(),
        }
    }

    /// Observation vector for the learners.
    pub fn features(&self) -> Vec<f64> {
        let s = &self.state;
        let mut f = Vec::with_capacity(self.observation_dim());
        f.extend(s.voltages.iter().map(|v| (v - 1.0) * 10.0));
        f.extend(s.capacitors.iter().map(|&c| c as f64));
        for (k, t) in self.net.transformers.iter().enumerate() {
            f.push(s.taps[k] as f64 / t.tap_max.max(1) as f64);
        }
        f.extend(s.soc.iter().copied());
        f.extend(s.battery_power.iter().copied());
        let phase = 2.0 * std::f64::consts::PI * s.hour as f64 / EPISODE_HOURS as f64;
        f.push(phase.sin());
        f.push(phase.cos());
        let alarmed = self.cyber.alarmed_devices();
        for key in device_keys(&self.net) {
            f.push(alarmed.contains(&channel_id(key)) as u8 as f64);
        }
        f
    }

    /// Maps policy output onto device commands; frozen devices hold.
    pub fn decode(&self, a: &AgentAction) -> ControlAction {
        let mut commands = Vec::new();
        let (mut d, mut c) = (0, 0);
        for key in &self.space.controllable {
            match *key {
                DeviceKey::Capacitor(id) => {
                    commands.push(DeviceCommand::Capacitor { id, on: a.discrete[d] == 1 });
                    d += 1;
                }
                DeviceKey::Transformer(id) => {
                    let t = &self.net.transformers[self.net.transformer_index(id).unwrap()];
                    commands.push(DeviceCommand::Transformer { id, tap: t.tap_min + a.discrete[d] as i32 });
                    d += 1;
                }
                DeviceKey::Battery(id) => {
                    commands.push(DeviceCommand::Battery { id, power: a.continuous[c].clamp(-1.0, 1.0) });
                    c += 1;
                }
            }
        }
        ControlAction::new(commands)
    }

    /// Inverse of [`decode`](Self::decode) for the controllable devices.
    pub fn encode(&self, action: &ControlAction) -> AgentAction {
        let mut out = AgentAction::default();
        for key in &self.space.controllable {
            let cmd = action.commands.iter().rev().find(|c| c.device_key() == *key).cloned();
            let cmd = cmd.unwrap_or_else(|| current_setting(&self.net, *key));
            match cmd {
                DeviceCommand::Capacitor { on, .. } => out.discrete.push(on as usize),
                DeviceCommand::Transformer { id, tap } => {
                    let t = &self.net.transformers[self.net.transformer_index(id).unwrap()];
                    out.discrete.push((tap - t.tap_min) as usize);
                }
                DeviceCommand::Battery { power, .. } => out.continuous.push(power),
            }
        }
        out
    }
}

/// Command that keeps a device exactly as it is.
pub fn current_setting(net: &PowerNetwork, key: DeviceKey) -> DeviceCommand {
    match key {
        DeviceKey::Capacitor(id) => DeviceCommand::Capacitor { id, on: net.capacitors[net.capacitor_index(id).unwrap()].on },
        DeviceKey::Transformer(id) => {
            DeviceCommand::Transformer { id, tap: net.transformers[net.transformer_index(id).unwrap()].tap }
        }
        DeviceKey::Battery(id) => DeviceCommand::Battery { id, power: net.batteries[net.battery_index(id).unwrap()].power },
    }
}

impl Environment for VoltVarEnv {
    fn observation_dim(&self) -> usize {
        let n = &self.net;
        n.bus_count() + n.capacitors.len() + n.transformers.len() + 2 * n.batteries.len() + 2 + device_keys(n).len()
    }

    fn action_spec(&self) -> ActionSpec {
        let mut categorical = Vec::new();
        let mut continuous = 0;
        for key in &self.space.controllable {
            match *key {
                DeviceKey::Capacitor(_) => categorical.push(2),
                DeviceKey::Transformer(id) => {
                    categorical.push(self.net.transformers[self.net.transformer_index(id).unwrap()].positions())
                }
                DeviceKey::Battery(_) => continuous += 1,
            }
        }
        ActionSpec { categorical, continuous }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.reset_state(seed).expect("scenario was validated at construction");
        self.features()
    }

    fn step(&mut self, action: &AgentAction) -> Transition {
        let cmd = self.decode(action);
        let out = self.step_action(&cmd).expect("decoded actions are in range");
        Transition {
            obs: self.features(),
            reward: out.reward.total,
            done: out.done,
            parts: RewardParts { f_volt: out.reward.f_volt, f_ctrl: out.reward.f_ctrl, f_power: out.reward.f_power },
        }
    }
}
