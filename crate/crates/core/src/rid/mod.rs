//! Role and interaction discovery: which controllers can move the states
//! that matter, which of them are indispensable, and which are interchangeable.

mod lu;
mod roles;
mod sensitivity;

pub use lu::{echelon_lu, numerical_rank, EchelonLu};
pub use roles::{
    classify_controllers, coupling_index, find_support_groups, support_group_indices, ControllerRoles, RoleOptions,
};
pub use sensitivity::{compute_sensitivity, select_targets, Quantity, SensitivityMatrix, SensitivityOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{solve_power_flow, DeviceKey, PowerNetwork};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidOptions {
    pub sensitivity: SensitivityOptions,
    pub roles: RoleOptions,
}

/// Everything one RID run produced, as written by the `rid` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidReport {
    pub case: String,
    pub scenario: String,
    /// True when targets came from violations, false for the all-bus fallback.
    pub targets_from_violations: bool,
    pub sensitivity: SensitivityMatrix,
    pub roles: ControllerRoles,
    /// Controllers excluded because their channel is blocked.
    pub unavailable: Vec<DeviceKey>,
}

impl RidReport {
    pub fn has_critical_battery(&self) -> bool {
        self.roles.critical.iter().any(|k| matches!(k, DeviceKey::Battery(_)))
    }
}

/// Capacitors and batteries that are not in `unavailable`.
pub fn rid_controllers(net: &PowerNetwork, unavailable: &[DeviceKey]) -> Vec<DeviceKey> {
    net.capacitors
        .iter()
        .map(|c| DeviceKey::Capacitor(c.id))
        .chain(net.batteries.iter().map(|b| DeviceKey::Battery(b.id)))
        .filter(|k| !unavailable.contains(k))
        .collect()
}

/// Runs the three RID steps on a contingency network at the given loading.
pub fn run_rid(
    net: &PowerNetwork,
    scale: &[f64],
    unavailable: &[DeviceKey],
    opts: &RidOptions,
) -> Result<(SensitivityMatrix, ControllerRoles, bool)> {
    let sol = solve_power_flow(net, scale);
    if !sol.converged {
        return Err(Error::BaseCaseDiverged);
    }
    let (targets, from_violations) = select_targets(net, &sol, 0.95, 1.05);
    let controllers = rid_controllers(net, unavailable);
    let psi = compute_sensitivity(net, scale, &controllers, &targets, &opts.sensitivity)?;
    let roles = classify_controllers(&psi, &opts.roles)?;
    Ok((psi, roles, from_violations))
}
