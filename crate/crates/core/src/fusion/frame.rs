use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityLabel {
    Stable,
    Unstable,
}

impl StabilityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityLabel::Stable => "stable",
            StabilityLabel::Unstable => "unstable",
        }
    }
}

impl std::str::FromStr for StabilityLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stable" => Ok(StabilityLabel::Stable),
            "unstable" => Ok(StabilityLabel::Unstable),
            _ => Err(Error::InvalidArgument(format!("unknown label `{s}`"))),
        }
    }
}

/// Fused physical and cyber telemetry at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub branch_current: Vec<f64>,
    /// Latest RTT, ms; a timeout is recorded as the timeout value.
    pub rtt_ms: f64,
    #[serde(default)]
    pub label: Option<StabilityLabel>,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub scenario: String,
}

impl TelemetryFrame {
    pub fn feature_count(&self) -> usize {
        self.vm.len() + self.va.len() + self.branch_current.len() + 1
    }

    /// Voltages, angles, branch currents, then RTT.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.feature_count());
        f.extend_from_slice(&self.vm);
        f.extend_from_slice(&self.va);
        f.extend_from_slice(&self.branch_current);
        f.push(self.rtt_ms);
        f
    }

    /// Same as [`features`](Self::features) without the RTT.
    pub fn physical_features(&self) -> Vec<f64> {
        let mut f = self.features();
        f.pop();
        f
    }

    pub fn validate(&self) -> Result<()> {
        if self.vm.is_empty() || self.vm.len() != self.va.len() {
            return Err(Error::Dimension(format!(
                "frame has {} magnitudes and {} angles",
                self.vm.len(),
                self.va.len()
            )));
        }
        if let Some(x) = self.features().iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("frame feature {x}")));
        }
        Ok(())
    }

    /// Column names in feature order.
    pub fn header(buses: usize, branches: usize) -> Vec<String> {
        let mut h = Vec::with_capacity(2 * buses + branches + 1);
        h.extend((1..=buses).map(|i| format!("vm_{i}")));
        h.extend((1..=buses).map(|i| format!("va_{i}")));
        h.extend((1..=branches).map(|i| format!("i_{i}")));
        h.push("rtt_ms".to_string());
        h
    }
}
