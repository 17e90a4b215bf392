use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{solve_power_flow_with, DeviceKey, PowerFlowOptions, PowerFlowSolution, PowerNetwork};

/// A monitored quantity: one column of Ψ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Quantity {
    /// Voltage magnitude at a bus, p.u.
    BusVoltage(u32),
    /// Real power entering a branch at its from end, MW.
    LineFlow(u32),
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quantity::BusVoltage(id) => write!(f, "V{id}"),
            Quantity::LineFlow(id) => write!(f, "P{id}"),
        }
    }
}

impl Quantity {
    fn read(&self, net: &PowerNetwork, sol: &PowerFlowSolution) -> Result<f64> {
        match *self {
            Quantity::BusVoltage(id) => net
                .bus_index(id)
                .map(|i| sol.vm[i])
                .ok_or_else(|| Error::UnknownDevice(format!("bus {id}"))),
            Quantity::LineFlow(id) => net
                .branches
                .iter()
                .position(|b| b.id == id)
                .map(|k| sol.branch_p_mw[k])
                .ok_or_else(|| Error::UnknownDevice(format!("branch {id}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityOptions {
    /// Battery perturbation, MW.
    pub delta_mw: f64,
    /// Capacitor perturbation, MVAr.
    pub delta_mvar: f64,
    /// Tap perturbation, in tap steps (applied as a continuous ratio change).
    pub delta_tap: f64,
    pub central: bool,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self { delta_mw: 1.0, delta_mvar: 1.0, delta_tap: 1.0, central: false }
    }
}

impl SensitivityOptions {
    fn delta_for(&self, c: DeviceKey) -> f64 {
        match c {
            DeviceKey::Capacitor(_) => self.delta_mvar,
            DeviceKey::Battery(_) => self.delta_mw,
            DeviceKey::Transformer(_) => self.delta_tap,
        }
    }
}

/// Rows are controllers, columns monitored quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    pub controllers: Vec<DeviceKey>,
    pub quantities: Vec<Quantity>,
    /// Row-major entries.
    pub values: Vec<Vec<f64>>,
    /// Perturbation actually used per controller.
    pub deltas: Vec<f64>,
    pub central: bool,
}

impl SensitivityMatrix {
    pub fn from_rows(controllers: Vec<DeviceKey>, quantities: Vec<Quantity>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != controllers.len() || values.iter().any(|r| r.len() != quantities.len()) {
            return Err(Error::Dimension(format!(
                "{} controllers × {} quantities do not match the value rows",
                controllers.len(),
                quantities.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensitivity entry".into()));
        }
        let deltas = vec![0.0; controllers.len()];
        Ok(Self { controllers, quantities, values, deltas, central: false })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.controllers.len(), self.quantities.len(), |i, j| self.values[i][j])
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SensitivityMatrix {
        SensitivityMatrix {
            controllers: rows.iter().map(|&i| self.controllers[i]).collect(),
            quantities: self.quantities.clone(),
            values: rows.iter().map(|&i| self.values[i].clone()).collect(),
            deltas: rows.iter().map(|&i| self.deltas[i]).collect(),
            central: self.central,
        }
    }
}

fn perturbed(net: &PowerNetwork, c: DeviceKey, delta: f64) -> Result<PowerNetwork> {
    let mut net = net.clone();
    let missing = || Error::UnknownDevice(c.to_string());
    match c {
        DeviceKey::Capacitor(id) => {
            let bus = net.capacitors[net.capacitor_index(id).ok_or_else(missing)?].bus;
            let i = net.bus_index(bus).ok_or_else(missing)?;
            net.buses[i].shunt_mvar += delta;
        }
        DeviceKey::Battery(id) => {
            let k = net.battery_index(id).ok_or_else(missing)?;
            let b = &mut net.batteries[k];
            b.power += delta / b.max_power_mw;
        }
        DeviceKey::Transformer(id) => {
            let t = net.transformers[net.transformer_index(id).ok_or_else(missing)?].clone();
            let k = net.branches.iter().position(|b| b.id == t.branch).ok_or_else(missing)?;
            net.branches[k].ratio += delta * t.step;
        }
    }
    Ok(net)
}

fn solve_tight(net: &PowerNetwork, scale: &[f64]) -> PowerFlowSolution {
    let opts = PowerFlowOptions { tolerance: 1e-11, ..PowerFlowOptions::default() };
    solve_power_flow_with(net, scale, &opts)
}

/// Finite-difference sensitivities around the operating point `(net, scale)`,
/// one re-solved power flow per controller (two when central).
pub fn compute_sensitivity(
    net: &PowerNetwork,
    scale: &[f64],
    controllers: &[DeviceKey],
    targets: &[Quantity],
    opts: &SensitivityOptions,
) -> Result<SensitivityMatrix> {
    let base = solve_tight(net, scale);
    if !base.converged {
        return Err(Error::BaseCaseDiverged);
    }
    let base_q: Vec<f64> = targets.iter().map(|q| q.read(net, &base)).collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(controllers.len());
    let mut deltas = Vec::with_capacity(controllers.len());
    for &c in controllers {
        let d0 = opts.delta_for(c);
        if !(d0 > 0.0) {
            return Err(Error::InvalidArgument(format!("perturbation for {c} must be positive")));
        }
        let mut row = None;
        for delta in [d0, d0 / 10.0] {
            let up_net = perturbed(net, c, delta)?;
            let up = solve_tight(&up_net, scale);
            if !up.converged {
                continue;
            }
            let up_q: Vec<f64> = targets.iter().map(|q| q.read(&up_net, &up)).collect::<Result<_>>()?;
            let r: Vec<f64> = if opts.central {
                let dn_net = perturbed(net, c, -delta)?;
                let dn = solve_tight(&dn_net, scale);
                if !dn.converged {
                    continue;
                }
                let dn_q: Vec<f64> = targets.iter().map(|q| q.read(&dn_net, &dn)).collect::<Result<_>>()?;
                up_q.iter().zip(&dn_q).map(|(u, d)| (u - d) / (2.0 * delta)).collect()
            } else {
                up_q.iter().zip(&base_q).map(|(u, b)| (u - b) / delta).collect()
            };
            row = Some((r, delta));
            break;
        }
        let (r, delta) = row.ok_or_else(|| Error::PerturbationDiverged { controller: c.to_string() })?;
        values.push(r);
        deltas.push(delta);
    }
    Ok(SensitivityMatrix {
        controllers: controllers.to_vec(),
        quantities: targets.to_vec(),
        values,
        deltas,
        central: opts.central,
    })
}

/// Violated bus voltages and overloaded lines of a solved case; all bus
/// voltages when nothing is violated. The flag tells which rule applied.
pub fn select_targets(net: &PowerNetwork, sol: &PowerFlowSolution, v_lo: f64, v_hi: f64) -> (Vec<Quantity>, bool) {
    let mut out: Vec<Quantity> = sol
        .voltage_violations(v_lo, v_hi)
        .into_iter()
        .filter(|&i| sol.vm[i] > 0.0)
        .map(|i| Quantity::BusVoltage(net.buses[i].id))
        .collect();
    out.extend(sol.overloaded_branches(net).into_iter().map(|k| Quantity::LineFlow(net.branches[k].id)));
    if out.is_empty() {
        let all = net
            .buses
            .iter()
            .enumerate()
            .filter(|(i, _)| sol.vm[*i] > 0.0)
            .map(|(_, b)| Quantity::BusVoltage(b.id))
            .collect();
        (all, false)
    } else {
        (out, true)
    }
}
