//! Control actions and their application to a network.

use serde::{Deserialize, Serialize};

use super::network::PowerNetwork;
use crate::error::{Error, Result};

/// Length of one control period, hours.
pub const CONTROL_PERIOD_H: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "device", rename_all = "snake_case")]
pub enum DeviceCommand {
    Capacitor { id: u32, on: bool },
    Transformer { id: u32, tap: i32 },
    /// Normalized power in [-1, 1]: -1 full charge, +1 full discharge.
    Battery { id: u32, power: f64 },
}

impl DeviceCommand {
    pub fn device_key(&self) -> DeviceKey {
        match *self {
            DeviceCommand::Capacitor { id, .. } => DeviceKey::Capacitor(id),
            DeviceCommand::Transformer { id, .. } => DeviceKey::Transformer(id),
            DeviceCommand::Battery { id, .. } => DeviceKey::Battery(id),
        }
    }
}

/// Identity of a controllable device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum DeviceKey {
    Capacitor(u32),
    Transformer(u32),
    Battery(u32),
}

impl std::fmt::Display for DeviceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviceKey::Capacitor(id) => write!(f, "capacitor {id}"),
            DeviceKey::Transformer(id) => write!(f, "transformer {id}"),
            DeviceKey::Battery(id) => write!(f, "battery {id}"),
        }
    }
}

impl DeviceKey {
    pub fn exists_in(&self, net: &PowerNetwork) -> bool {
        match *self {
            DeviceKey::Capacitor(id) => net.capacitor_index(id).is_some(),
            DeviceKey::Transformer(id) => net.transformer_index(id).is_some(),
            DeviceKey::Battery(id) => net.battery_index(id).is_some(),
        }
    }
}

/// Every controllable device of a network in canonical order:
/// capacitors, then tap changers, then batteries.
pub fn device_keys(net: &PowerNetwork) -> Vec<DeviceKey> {
    net.capacitors
        .iter()
        .map(|c| DeviceKey::Capacitor(c.id))
        .chain(net.transformers.iter().map(|t| DeviceKey::Transformer(t.id)))
        .chain(net.batteries.iter().map(|b| DeviceKey::Battery(b.id)))
        .collect()
}

/// A set of device commands applied together at one control step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub commands: Vec<DeviceCommand>,
}

impl ControlAction {
    pub fn new(commands: Vec<DeviceCommand>) -> Self {
        Self { commands }
    }

    /// Command every device to hold its present setting (batteries idle).
    pub fn hold(net: &PowerNetwork) -> Self {
        let mut commands = Vec::new();
        commands.extend(net.capacitors.iter().map(|c| DeviceCommand::Capacitor { id: c.id, on: c.on }));
        commands.extend(net.transformers.iter().map(|t| DeviceCommand::Transformer { id: t.id, tap: t.tap }));
        commands.extend(net.batteries.iter().map(|b| DeviceCommand::Battery { id: b.id, power: 0.0 }));
        Self { commands }
    }

    pub fn touches(&self, key: DeviceKey) -> bool {
        self.commands.iter().any(|c| c.device_key() == key)
    }

    /// Check ids and bounds without applying anything.
    pub fn validate(&self, net: &PowerNetwork) -> Result<()> {
        for cmd in &self.commands {
            match *cmd {
                DeviceCommand::Capacitor { id, .. } => {
                    net.capacitor_index(id).ok_or_else(|| Error::UnknownDevice(format!("capacitor {id}")))?;
                }
                DeviceCommand::Transformer { id, tap } => {
                    let k = net
                        .transformer_index(id)
                        .ok_or_else(|| Error::UnknownDevice(format!("transformer {id}")))?;
                    let t = &net.transformers[k];
                    if !t.in_range(tap) {
                        return Err(Error::InvalidSetting {
                            device: format!("transformer {id}"),
                            reason: format!("tap {tap} outside [{}, {}]", t.tap_min, t.tap_max),
                        });
                    }
                }
                DeviceCommand::Battery { id, power } => {
                    net.battery_index(id).ok_or_else(|| Error::UnknownDevice(format!("battery {id}")))?;
                    if !(-1.0..=1.0).contains(&power) {
                        return Err(Error::InvalidSetting {
                            device: format!("battery {id}"),
                            reason: format!("power {power} outside [-1, 1]"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Apply a control action for one control period and return the new network.
///
/// Battery requests are truncated at the SoC boundary; the stored `power`
/// is the effective (truncated) value and SoC integrates it over the period.
pub fn apply_device_settings(net: &PowerNetwork, action: &ControlAction) -> Result<PowerNetwork> {
    action.validate(net)?;
    let mut out = net.clone();
    for cmd in &action.commands {
        match *cmd {
            DeviceCommand::Capacitor { id, on } => {
                let k = out.capacitor_index(id).unwrap();
                out.capacitors[k].on = on;
            }
            DeviceCommand::Transformer { id, tap } => {
                let k = out.transformer_index(id).unwrap();
                out.transformers[k].tap = tap;
            }
            DeviceCommand::Battery { id, power } => {
                // Starts from the pre-action SoC so repeated application is idempotent.
                let k = out.battery_index(id).unwrap();
                let src = &net.batteries[k];
                let (effective, soc) = battery_step(src.soc, src.max_power_mw, src.capacity_mwh, power);
                let b = &mut out.batteries[k];
                b.power = effective;
                b.soc = soc;
            }
        }
    }
    Ok(out)
}

/// One control period of battery energy bookkeeping. Returns
/// (effective normalized power, new SoC).
pub fn battery_step(soc: f64, max_power_mw: f64, capacity_mwh: f64, request: f64) -> (f64, f64) {
    let energy = request * max_power_mw * CONTROL_PERIOD_H;
    let energy = if energy > 0.0 {
        energy.min(soc * capacity_mwh)
    } else {
        energy.max(-(1.0 - soc) * capacity_mwh)
    };
    let soc = (soc - energy / capacity_mwh).clamp(0.0, 1.0);
    let effective = energy / (max_power_mw * CONTROL_PERIOD_H);
    (if effective == 0.0 { 0.0 } else { effective }, soc)
}
