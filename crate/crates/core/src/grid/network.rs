//! Network data model and case-file loading.
//!
//! All impedances are per unit on the system base (`base_mva`, normally
//! 100 MVA). Device ids (capacitors, batteries, tap changers) are 1-based
//! labels taken from the case file; vectors are kept in file order.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub base_kv: f64,
    #[serde(rename = "type")]
    pub kind: BusType,
    /// Fixed shunt at nominal voltage, MVAr (positive = capacitive).
    #[serde(default)]
    pub shunt_mvar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance.
    #[serde(default)]
    pub b: f64,
    pub rating_mva: f64,
    /// Fixed off-nominal turns ratio on the `from` side.
    #[serde(default = "one")]
    pub ratio: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

/// On-load tap changer acting on a branch's turns ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapChanger {
    pub id: u32,
    pub branch: u32,
    pub tap: i32,
    pub tap_min: i32,
    pub tap_max: i32,
    /// Ratio change per tap step (0.00625 = 0.625 %).
    pub step: f64,
}

impl TapChanger {
    pub fn in_range(&self, tap: i32) -> bool {
        (self.tap_min..=self.tap_max).contains(&tap)
    }

    pub fn positions(&self) -> usize {
        (self.tap_max - self.tap_min + 1) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub p_mw: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_setpoint: f64,
    #[serde(default)]
    pub p_max: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacitor {
    pub id: u32,
    pub bus: u32,
    pub rated_kvar: f64,
    pub on: bool,
}

impl Capacitor {
    pub fn rated_mvar(&self) -> f64 {
        self.rated_kvar / 1000.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatteryMode {
    Charge,
    Discharge,
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Battery {
    pub id: u32,
    pub bus: u32,
    pub max_power_mw: f64,
    pub capacity_mwh: f64,
    pub soc: f64,
    /// Normalized power in [-1, 1]; -1 is full charge, +1 full discharge.
    #[serde(default)]
    pub power: f64,
}

impl Battery {
    pub fn mode(&self) -> BatteryMode {
        if self.power > 0.0 {
            BatteryMode::Discharge
        } else if self.power < 0.0 {
            BatteryMode::Charge
        } else {
            BatteryMode::Idle
        }
    }

    /// Real-power injection into the grid, MW.
    pub fn injection_mw(&self) -> f64 {
        self.power * self.max_power_mw
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// The physical plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerNetwork {
    pub name: String,
    pub base_mva: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub transformers: Vec<TapChanger>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    #[serde(default)]
    pub capacitors: Vec<Capacitor>,
    #[serde(default)]
    pub batteries: Vec<Battery>,
}

/// Built-in augmented test systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    #[serde(alias = "wscc9")]
    Wscc9Augmented,
    #[serde(alias = "ieee24")]
    Ieee24Augmented,
}

impl CaseId {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::Wscc9Augmented => "wscc9_augmented",
            CaseId::Ieee24Augmented => "ieee24_augmented",
        }
    }

    fn source(self) -> &'static str {
        match self {
            CaseId::Wscc9Augmented => include_str!("../../cases/wscc9_augmented.json"),
            CaseId::Ieee24Augmented => include_str!("../../cases/ieee24_augmented.json"),
        }
    }
}

impl std::str::FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wscc9" | "wscc9_augmented" => Ok(CaseId::Wscc9Augmented),
            "ieee24" | "ieee24_augmented" => Ok(CaseId::Ieee24Augmented),
            other => Err(Error::InvalidArgument(format!("unknown case id `{other}`"))),
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where to load a case from.
#[derive(Clone, Debug)]
pub enum CaseSource<'a> {
    Builtin(CaseId),
    File(&'a Path),
}

pub fn load_case(source: CaseSource<'_>) -> Result<PowerNetwork> {
    match source {
        CaseSource::Builtin(id) => PowerNetwork::from_json_str(id.source()),
        CaseSource::File(path) => PowerNetwork::from_json_str(&std::fs::read_to_string(path)?),
    }
}

impl PowerNetwork {
    pub fn builtin(id: CaseId) -> PowerNetwork {
        load_case(CaseSource::Builtin(id)).expect("bundled case files are valid")
    }

    pub fn from_json_str(text: &str) -> Result<PowerNetwork> {
        let net: PowerNetwork = serde_json::from_str(text).map_err(|e| Error::CaseParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Validation(m));
        if !(self.base_mva > 0.0) {
            return invalid("base_mva must be positive".into());
        }
        let mut ids = HashSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return invalid(format!("duplicate bus id {}", bus.id));
            }
        }
        let slack = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if slack != 1 {
            return invalid(format!("expected exactly one slack bus, found {slack}"));
        }
        let has_bus = |id: u32| ids.contains(&id);
        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return invalid(format!("duplicate branch id {}", br.id));
            }
            if !has_bus(br.from) || !has_bus(br.to) {
                return invalid(format!("branch {} references a missing bus", br.id));
            }
            if br.from == br.to {
                return invalid(format!("branch {} is a self loop", br.id));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return invalid(format!("branch {} has zero impedance", br.id));
            }
            if !(br.ratio > 0.0) {
                return invalid(format!("branch {} has non-positive ratio", br.id));
            }
        }
        let mut seen = HashSet::new();
        for t in &self.transformers {
            if !seen.insert(t.id) {
                return invalid(format!("duplicate transformer id {}", t.id));
            }
            if !branch_ids.contains(&t.branch) {
                return invalid(format!("transformer {} references missing branch {}", t.id, t.branch));
            }
            if t.tap_min > t.tap_max || !t.in_range(t.tap) {
                return invalid(format!("transformer {} tap {} outside its range", t.id, t.tap));
            }
        }
        seen.clear();
        for g in &self.generators {
            if !seen.insert(g.id) || !has_bus(g.bus) {
                return invalid(format!("generator {} is duplicated or off-network", g.id));
            }
        }
        let slack_bus = self.slack_bus().id;
        if !self.generators.iter().any(|g| g.bus == slack_bus && g.in_service) {
            return invalid("slack bus has no in-service generator".into());
        }
        for l in &self.loads {
            if !has_bus(l.bus) {
                return invalid(format!("load at missing bus {}", l.bus));
            }
        }
        seen.clear();
        for c in &self.capacitors {
            if !seen.insert(c.id) || !has_bus(c.bus) {
                return invalid(format!("capacitor {} is duplicated or off-network", c.id));
            }
            if !(c.rated_kvar > 0.0) {
                return invalid(format!("capacitor {} rating must be positive", c.id));
            }
        }
        seen.clear();
        for b in &self.batteries {
            if !seen.insert(b.id) || !has_bus(b.bus) {
                return invalid(format!("battery {} is duplicated or off-network", b.id));
            }
            if !(0.0..=1.0).contains(&b.soc) {
                return invalid(format!("battery {} SoC {} outside [0, 1]", b.id, b.soc));
            }
            if !(-1.0..=1.0).contains(&b.power) {
                return invalid(format!("battery {} power {} outside [-1, 1]", b.id, b.power));
            }
            if !(b.max_power_mw > 0.0 && b.capacity_mwh > 0.0) {
                return invalid(format!("battery {} needs positive ratings", b.id));
            }
        }
        Ok(())
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_bus(&self) -> &Bus {
        self.buses
            .iter()
            .find(|b| b.kind == BusType::Slack)
            .expect("validated network has a slack bus")
    }

    pub fn capacitor_index(&self, id: u32) -> Option<usize> {
        self.capacitors.iter().position(|c| c.id == id)
    }

    pub fn battery_index(&self, id: u32) -> Option<usize> {
        self.batteries.iter().position(|b| b.id == id)
    }

    pub fn transformer_index(&self, id: u32) -> Option<usize> {
        self.transformers.iter().position(|t| t.id == id)
    }

    /// Total nominal demand, MW.
    pub fn nominal_demand_mw(&self) -> f64 {
        self.loads.iter().map(|l| l.p_mw).sum()
    }

    /// Copy with every branch between `a` and `b` (either direction) out of service.
    pub fn with_branch_outage(&self, a: u32, b: u32) -> Result<PowerNetwork> {
        let mut net = self.clone();
        let mut hit = false;
        for br in &mut net.branches {
            if (br.from == a && br.to == b) || (br.from == b && br.to == a) {
                br.in_service = false;
                hit = true;
            }
        }
        if !hit {
            return Err(Error::UnknownDevice(format!("branch {a}-{b}")));
        }
        Ok(net)
    }

    /// Copy with every generator at `bus` out of service.
    pub fn with_generator_outage(&self, bus: u32) -> Result<PowerNetwork> {
        if bus == self.slack_bus().id {
            return Err(Error::Validation("cannot trip the slack generator".into()));
        }
        let mut net = self.clone();
        let mut hit = false;
        for g in net.generators.iter_mut().filter(|g| g.bus == bus) {
            g.in_service = false;
            hit = true;
        }
        if !hit {
            return Err(Error::UnknownDevice(format!("generator at bus {bus}")));
        }
        Ok(net)
    }

    /// Effective turns ratio of every branch including tap-changer offsets.
    pub fn branch_ratios(&self) -> Vec<f64> {
        let mut ratios: Vec<f64> = self.branches.iter().map(|b| b.ratio).collect();
        for t in &self.transformers {
            if let Some(k) = self.branches.iter().position(|b| b.id == t.branch) {
                ratios[k] += t.step * t.tap as f64;
            }
        }
        ratios
    }
}
