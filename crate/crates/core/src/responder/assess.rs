use serde::{Deserialize, Serialize};

use crate::fusion::{StabilityLabel, TelemetryFrame};
use crate::grid::PowerNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemStatus {
    Normal,
    Abnormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceClass {
    Cyber,
    Physical,
    CyberPhysical,
    /// Flagged by the anomaly cluster alone.
    Unknown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Channels with an active alert.
    pub alerts: Vec<String>,
    pub violated_buses: Vec<u32>,
    pub overloaded_branches: Vec<u32>,
    pub unstable_cluster: bool,
}

impl Evidence {
    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty() && self.violated_buses.is_empty() && self.overloaded_branches.is_empty() && !self.unstable_cluster
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemAssessment {
    pub status: SystemStatus,
    /// None when the status is normal.
    pub class: Option<DisturbanceClass>,
    pub evidence: Evidence,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessLimits {
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for AssessLimits {
    fn default() -> Self {
        Self { v_lo: 0.95, v_hi: 1.05 }
    }
}

/// Rule table: voltage or flow violations are physical evidence, alerts are
/// cyber evidence, and an unstable-cluster verdict alone is unclassified.
pub fn evaluate_state(
    net: &PowerNetwork,
    frame: &TelemetryFrame,
    alerts: &[String],
    cluster: Option<StabilityLabel>,
    limits: &AssessLimits,
) -> SystemAssessment {
    let violated_buses = net
        .buses
        .iter()
        .zip(&frame.vm)
        .filter(|(_, v)| **v < limits.v_lo || **v > limits.v_hi)
        .map(|(b, _)| b.id)
        .collect();
    let overloaded_branches = net
        .branches
        .iter()
        .zip(&frame.branch_current)
        .filter(|(br, i)| {
            let vf = net.bus_index(br.from).map_or(1.0, |k| frame.vm[k]);
            br.in_service && br.rating_mva > 0.0 && **i * vf * net.base_mva > br.rating_mva
        })
        .map(|(br, _)| br.id)
        .collect();
    let mut alerts = alerts.to_vec();
    alerts.sort();
    alerts.dedup();
    let evidence = Evidence {
        alerts,
        violated_buses,
        overloaded_branches,
        unstable_cluster: cluster == Some(StabilityLabel::Unstable),
    };
    let cyber = !evidence.alerts.is_empty();
    let physical = !evidence.violated_buses.is_empty() || !evidence.overloaded_branches.is_empty();
    let class = match (cyber, physical) {
        (true, true) => Some(DisturbanceClass::CyberPhysical),
        (true, false) => Some(DisturbanceClass::Cyber),
        (false, true) => Some(DisturbanceClass::Physical),
        (false, false) if evidence.unstable_cluster => Some(DisturbanceClass::Unknown),
        _ => None,
    };
    let status = if class.is_some() { SystemStatus::Abnormal } else { SystemStatus::Normal };
    SystemAssessment { status, class, evidence, t: frame.t }
}
