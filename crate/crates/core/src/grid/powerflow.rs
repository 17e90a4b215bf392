//! Steady-state AC power flow (Newton-Raphson, polar form, flat start).

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::{BusType, PowerNetwork};

type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest power mismatch, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Convert PV buses whose generator reactive output leaves its limits to PQ.
    pub enforce_q_limits: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 50, enforce_q_limits: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// Bus voltage magnitudes, p.u., in bus order.
    pub vm: Vec<f64>,
    /// Bus voltage angles, rad.
    pub va: Vec<f64>,
    /// Current magnitude at the `from` end of every branch, p.u. (0 when out of service).
    pub branch_current: Vec<f64>,
    /// Real power entering every branch at its `from` end, MW.
    pub branch_p_mw: Vec<f64>,
    /// Larger of the two end apparent powers, MVA.
    pub branch_s_mva: Vec<f64>,
    /// Net injection per bus, MW / MVAr.
    pub bus_p_mw: Vec<f64>,
    pub bus_q_mvar: Vec<f64>,
    pub p_loss_mw: f64,
    pub p_total_mw: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    /// Bus indices switched from PV to PQ at a reactive limit.
    #[serde(default)]
    pub q_limited: Vec<usize>,
}

impl PowerFlowSolution {
    /// Bus indices whose magnitude lies outside `[lo, hi]`.
    pub fn voltage_violations(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.vm
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < lo - 1e-9 || v > hi + 1e-9)
            .map(|(i, _)| i)
            .collect()
    }

    /// Branch indices loaded above their MVA rating.
    pub fn overloaded_branches(&self, net: &PowerNetwork) -> Vec<usize> {
        net.branches
            .iter()
            .enumerate()
            .filter(|(k, b)| b.in_service && self.branch_s_mva[*k] > b.rating_mva + 1e-9)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Bus-level data the solver needs, derived once from a network and load scaling.
#[derive(Clone, Debug)]
pub struct BusModel {
    pub kinds: Vec<BusType>,
    /// Voltage setpoints for slack/PV buses (1.0 elsewhere).
    pub v_set: Vec<f64>,
    /// Scheduled net injections, p.u.
    pub p_sched: Vec<f64>,
    pub q_sched: Vec<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub demand_mw: f64,
    /// Buses connected to the slack through in-service branches.
    pub energized: Vec<bool>,
    /// Summed reactive limits of in-service generators per bus, MVAr.
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
}

impl BusModel {
    pub fn new(net: &PowerNetwork, load_scale: &[f64]) -> BusModel {
        let n = net.bus_count();
        assert_eq!(load_scale.len(), n, "one load multiplier per bus");
        let base = net.base_mva;
        let idx = |id: u32| net.bus_index(id).expect("validated bus reference");

        let mut kinds: Vec<BusType> = net.buses.iter().map(|b| b.kind).collect();
        let mut v_set = vec![1.0; n];
        let mut has_gen = vec![false; n];
        let (mut q_min, mut q_max) = (vec![0.0; n], vec![0.0; n]);
        for g in net.generators.iter().filter(|g| g.in_service) {
            let i = idx(g.bus);
            if !has_gen[i] {
                v_set[i] = g.v_setpoint;
            }
            has_gen[i] = true;
            q_min[i] += g.q_min;
            q_max[i] += g.q_max;
        }
        for (i, k) in kinds.iter_mut().enumerate() {
            if *k == BusType::Pv && !has_gen[i] {
                *k = BusType::Pq;
            }
            if *k == BusType::Pq {
                v_set[i] = 1.0;
            }
        }

        let energized = energized_buses(net);
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut demand = 0.0;
        let nominal = net.nominal_demand_mw();
        for l in &net.loads {
            let i = idx(l.bus);
            let s = load_scale[i];
            p[i] -= l.p_mw * s;
            q[i] -= l.q_mvar * s;
            if energized[i] {
                demand += l.p_mw * s;
            }
        }
        // Non-slack units follow demand proportionally to their setpoints.
        let dispatch = if nominal > 0.0 { demand / nominal } else { 1.0 };
        for g in net.generators.iter().filter(|g| g.in_service) {
            let i = idx(g.bus);
            if kinds[i] != BusType::Slack {
                p[i] += g.p_mw * dispatch;
            }
        }
        for bat in &net.batteries {
            p[idx(bat.bus)] += bat.injection_mw();
        }
        for v in p.iter_mut().chain(q.iter_mut()) {
            *v /= base;
        }

        let (g, b) = admittance(net);
        BusModel { kinds, v_set, p_sched: p, q_sched: q, g, b, demand_mw: demand, energized, q_min, q_max }
    }
}

/// Marks buses reachable from the slack. Islands without the slack are
/// de-energized: their voltages are reported as zero.
pub fn energized_buses(net: &PowerNetwork) -> Vec<bool> {
    let n = net.bus_count();
    let mut adj = vec![Vec::new(); n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (net.bus_index(br.from).unwrap(), net.bus_index(br.to).unwrap());
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![net.bus_index(net.slack_bus().id).unwrap()];
    while let Some(i) = stack.pop() {
        if !seen[i] {
            seen[i] = true;
            stack.extend(adj[i].iter().copied().filter(|&k| !seen[k]));
        }
    }
    seen
}

/// Dense bus admittance matrix as (G, B), including line charging, bus
/// shunts, switched-in capacitors and tap ratios.
pub fn admittance(net: &PowerNetwork) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = net.bus_count();
    let mut y = DMatrix::<C64>::zeros(n, n);
    let ratios = net.branch_ratios();
    for (k, br) in net.branches.iter().enumerate().filter(|(_, b)| b.in_service) {
        let (f, t) = (net.bus_index(br.from).unwrap(), net.bus_index(br.to).unwrap());
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let ysh = C64::new(0.0, br.b / 2.0);
        let tau = ratios[k];
        y[(f, f)] += (ys + ysh) / (tau * tau);
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys / tau;
        y[(t, f)] -= ys / tau;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        y[(i, i)] += C64::new(0.0, bus.shunt_mvar / net.base_mva);
    }
    for c in net.capacitors.iter().filter(|c| c.on) {
        let i = net.bus_index(c.bus).unwrap();
        y[(i, i)] += C64::new(0.0, c.rated_mvar() / net.base_mva);
    }
    (y.map(|z| z.re), y.map(|z| z.im))
}

fn injections(m: &BusModel, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut pi, mut qi) = (0.0, 0.0);
        for k in 0..n {
            let (g, b) = (m.g[(i, k)], m.b[(i, k)]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let (s, c) = (va[i] - va[k]).sin_cos();
            pi += vm[k] * (g * c + b * s);
            qi += vm[k] * (g * s - b * c);
        }
        p[i] = vm[i] * pi;
        q[i] = vm[i] * qi;
    }
    (p, q)
}

pub fn solve_power_flow(net: &PowerNetwork, load_scale: &[f64]) -> PowerFlowSolution {
    solve_power_flow_with(net, load_scale, &PowerFlowOptions::default())
}

pub fn solve_power_flow_with(
    net: &PowerNetwork,
    load_scale: &[f64],
    opts: &PowerFlowOptions,
) -> PowerFlowSolution {
    let mut model = BusModel::new(net, load_scale);
    let n = net.bus_count();
    let live = model.energized.clone();
    let mut vm: Vec<f64> = (0..n).map(|i| if live[i] { model.v_set[i] } else { 0.0 }).collect();
    let mut va = vec![0.0; n];
    let mut q_limited = Vec::new();
    let mut iterations = 0;
    loop {
        let (converged, mismatch) = newton(&model, &mut vm, &mut va, opts, &mut iterations);
        if !converged || !opts.enforce_q_limits {
            return finish(net, &model, vm, va, converged, iterations, mismatch, q_limited);
        }
        // Generator output = computed injection minus the scheduled (load) part.
        let (_, q) = injections(&model, &vm, &va);
        let mut switched = false;
        let pv: Vec<usize> = (0..n).filter(|&i| live[i] && model.kinds[i] == BusType::Pv).collect();
        for i in pv {
            let q_gen = (q[i] - model.q_sched[i]) * net.base_mva;
            let limit = if q_gen > model.q_max[i] + 1e-6 {
                model.q_max[i]
            } else if q_gen < model.q_min[i] - 1e-6 {
                model.q_min[i]
            } else {
                continue;
            };
            model.kinds[i] = BusType::Pq;
            model.q_sched[i] += limit / net.base_mva;
            q_limited.push(i);
            switched = true;
        }
        if !switched {
            q_limited.sort_unstable();
            return finish(net, &model, vm, va, true, iterations, mismatch, q_limited);
        }
    }
}

/// Newton iterations from the given start; returns (converged, final mismatch).
fn newton(
    model: &BusModel,
    vm: &mut [f64],
    va: &mut [f64],
    opts: &PowerFlowOptions,
    iterations: &mut usize,
) -> (bool, f64) {
    let n = vm.len();
    let live = &model.energized;
    let pvpq: Vec<usize> = (0..n).filter(|&i| live[i] && model.kinds[i] != BusType::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| live[i] && model.kinds[i] == BusType::Pq).collect();
    let (np, nq) = (pvpq.len(), pq.len());
    let mut local = 0;
    loop {
        let (p, q) = injections(model, vm, va);
        let mut f = DVector::<f64>::zeros(np + nq);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = model.p_sched[i] - p[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[np + r] = model.q_sched[i] - q[i];
        }
        let mismatch = f.amax();
        if !mismatch.is_finite() {
            return (false, mismatch);
        }
        if mismatch < opts.tolerance {
            return (true, mismatch);
        }
        if local >= opts.max_iterations {
            return (false, mismatch);
        }
        let jac = jacobian(model, vm, va, &p, &q, &pvpq, &pq);
        let Some(dx) = jac.lu().solve(&f) else { return (false, mismatch) };
        if dx.iter().any(|x| !x.is_finite()) {
            return (false, mismatch);
        }
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[np + r];
        }
        local += 1;
        *iterations += 1;
        if pq.iter().any(|&i| !(vm[i] > 0.0 && vm[i] < 10.0)) {
            return (false, mismatch);
        }
    }
}

fn jacobian(
    m: &BusModel,
    vm: &[f64],
    va: &[f64],
    p: &[f64],
    q: &[f64],
    pvpq: &[usize],
    pq: &[usize],
) -> DMatrix<f64> {
    let (np, nq) = (pvpq.len(), pq.len());
    let n = vm.len();
    let mut col_t = vec![usize::MAX; n];
    let mut col_v = vec![usize::MAX; n];
    for (c, &k) in pvpq.iter().enumerate() {
        col_t[k] = c;
    }
    for (c, &k) in pq.iter().enumerate() {
        col_v[k] = np + c;
    }
    let mut row_q = vec![usize::MAX; n];
    for (r, &i) in pq.iter().enumerate() {
        row_q[i] = np + r;
    }

    let mut j = DMatrix::<f64>::zeros(np + nq, np + nq);
    for (rp, &i) in pvpq.iter().enumerate() {
        let rq = row_q[i];
        for k in 0..n {
            let (g, b) = (m.g[(i, k)], m.b[(i, k)]);
            if k != i && g == 0.0 && b == 0.0 {
                continue;
            }
            let (dp_dt, dp_dv, dq_dt, dq_dv) = if k == i {
                (
                    -q[i] - b * vm[i] * vm[i],
                    p[i] / vm[i] + g * vm[i],
                    p[i] - g * vm[i] * vm[i],
                    q[i] / vm[i] - b * vm[i],
                )
            } else {
                let (s, c) = (va[i] - va[k]).sin_cos();
                (
                    vm[i] * vm[k] * (g * s - b * c),
                    vm[i] * (g * c + b * s),
                    -vm[i] * vm[k] * (g * c + b * s),
                    vm[i] * (g * s - b * c),
                )
            };
            if col_t[k] != usize::MAX {
                j[(rp, col_t[k])] = dp_dt;
                if rq != usize::MAX {
                    j[(rq, col_t[k])] = dq_dt;
                }
            }
            if col_v[k] != usize::MAX {
                j[(rp, col_v[k])] = dp_dv;
                if rq != usize::MAX {
                    j[(rq, col_v[k])] = dq_dv;
                }
            }
        }
    }
    j
}

fn finish(
    net: &PowerNetwork,
    model: &BusModel,
    vm: Vec<f64>,
    va: Vec<f64>,
    converged: bool,
    iterations: usize,
    max_mismatch: f64,
    q_limited: Vec<usize>,
) -> PowerFlowSolution {
    let base = net.base_mva;
    let ratios = net.branch_ratios();
    let v: Vec<C64> = vm.iter().zip(&va).map(|(&m, &a)| C64::from_polar(m, a)).collect();
    let nb = net.branches.len();
    let mut branch_current = vec![0.0; nb];
    let mut branch_p_mw = vec![0.0; nb];
    let mut branch_s_mva = vec![0.0; nb];
    let mut loss = 0.0;
    for (k, br) in net.branches.iter().enumerate().filter(|(_, b)| b.in_service) {
        let (f, t) = (net.bus_index(br.from).unwrap(), net.bus_index(br.to).unwrap());
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let ysh = C64::new(0.0, br.b / 2.0);
        let tau = ratios[k];
        let i_f = (ys + ysh) / (tau * tau) * v[f] - ys / tau * v[t];
        let i_t = ys + ysh;
        let i_t = i_t * v[t] - ys / tau * v[f];
        let s_f = v[f] * i_f.conj();
        let s_t = v[t] * i_t.conj();
        branch_current[k] = i_f.norm();
        branch_p_mw[k] = s_f.re * base;
        branch_s_mva[k] = s_f.norm().max(s_t.norm()) * base;
        loss += (s_f.re + s_t.re) * base;
    }
    let (p, q) = injections(model, &vm, &va);
    PowerFlowSolution {
        vm,
        va,
        branch_current,
        branch_p_mw,
        branch_s_mva,
        bus_p_mw: p.iter().map(|x| x * base).collect(),
        bus_q_mvar: q.iter().map(|x| x * base).collect(),
        p_loss_mw: loss.max(0.0),
        p_total_mw: model.demand_mw,
        converged,
        iterations,
        max_mismatch,
        q_limited,
    }
}

/// Largest absolute power-balance residual (p.u.) of a solution, recomputed
/// from its voltages: P at every non-slack bus, Q at every PQ bus and at the
/// limit for reactive-limited PV buses.
pub fn power_balance_residual(net: &PowerNetwork, load_scale: &[f64], sol: &PowerFlowSolution) -> f64 {
    let model = BusModel::new(net, load_scale);
    let (p, q) = injections(&model, &sol.vm, &sol.va);
    let mut worst: f64 = 0.0;
    for i in (0..sol.vm.len()).filter(|&i| model.energized[i]) {
        if model.kinds[i] != BusType::Slack {
            worst = worst.max((p[i] - model.p_sched[i]).abs());
        }
        if model.kinds[i] == BusType::Pq {
            worst = worst.max((q[i] - model.q_sched[i]).abs());
        } else if sol.q_limited.contains(&i) {
            let q_gen = q[i] - model.q_sched[i];
            let (lo, hi) = (model.q_min[i] / net.base_mva, model.q_max[i] / net.base_mva);
            worst = worst.max((q_gen - lo).abs().min((q_gen - hi).abs()));
        }
    }
    worst
}
