//! Gauss-Seidel power flow used only as a test oracle. It rebuilds the
//! admittance matrix and the injection schedule from the raw network data
//! instead of reusing the library's solver internals.

use gridresponder::grid::{BusType, PowerNetwork};
use nalgebra::Complex;

type C = Complex<f64>;

pub struct GsResult {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn gauss_seidel(net: &PowerNetwork, scale: &[f64], tol: f64, max_iter: usize) -> GsResult {
    let n = net.buses.len();
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();

    let mut y = vec![vec![C::new(0.0, 0.0); n]; n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let mut tau = br.ratio;
        for t in net.transformers.iter().filter(|t| t.branch == br.id) {
            tau += t.step * t.tap as f64;
        }
        let (f, t) = (pos(br.from), pos(br.to));
        let z = C::new(br.r, br.x);
        let ys = z.inv();
        let half = C::new(0.0, 0.5 * br.b);
        y[f][f] += (ys + half) / (tau * tau);
        y[t][t] += ys + half;
        y[f][t] -= ys / tau;
        y[t][f] -= ys / tau;
    }
    for (i, b) in net.buses.iter().enumerate() {
        y[i][i] += C::new(0.0, b.shunt_mvar / net.base_mva);
    }
    for c in net.capacitors.iter().filter(|c| c.on) {
        y[pos(c.bus)][pos(c.bus)] += C::new(0.0, c.rated_kvar / 1000.0 / net.base_mva);
    }

    let mut kind: Vec<BusType> = net.buses.iter().map(|b| b.kind).collect();
    let mut vset = vec![None; n];
    let mut qlim = vec![(0.0, 0.0); n];
    for g in net.generators.iter().filter(|g| g.in_service) {
        let i = pos(g.bus);
        if vset[i].is_none() {
            vset[i] = Some(g.v_setpoint);
        }
        qlim[i].0 += g.q_min / net.base_mva;
        qlim[i].1 += g.q_max / net.base_mva;
    }
    for i in 0..n {
        if kind[i] == BusType::Pv && vset[i].is_none() {
            kind[i] = BusType::Pq;
        }
    }
    let nominal: f64 = net.loads.iter().map(|l| l.p_mw).sum();
    let demand: f64 = net.loads.iter().map(|l| l.p_mw * scale[pos(l.bus)]).sum();
    let dispatch = if nominal > 0.0 { demand / nominal } else { 1.0 };
    let mut s = vec![C::new(0.0, 0.0); n];
    for l in &net.loads {
        let k = scale[pos(l.bus)];
        s[pos(l.bus)] -= C::new(l.p_mw * k, l.q_mvar * k);
    }
    for g in net.generators.iter().filter(|g| g.in_service) {
        if kind[pos(g.bus)] != BusType::Slack {
            s[pos(g.bus)] += C::new(g.p_mw * dispatch, 0.0);
        }
    }
    for b in &net.batteries {
        s[pos(b.bus)] += C::new(b.power * b.max_power_mw, 0.0);
    }
    for x in &mut s {
        *x /= net.base_mva;
    }

    let mut v: Vec<C> = (0..n)
        .map(|i| C::new(if kind[i] == BusType::Pq { 1.0 } else { vset[i].unwrap() }, 0.0))
        .collect();
    let mut converged;
    let mut it = 0;
    loop {
        converged = sweep(&y, &kind, &vset, &s, &mut v, tol, max_iter, &mut it);
        if !converged {
            break;
        }
        // PV buses whose generator leaves its reactive range are pinned at the limit.
        let mut pinned = false;
        for i in 0..n {
            if kind[i] != BusType::Pv {
                continue;
            }
            let sum: C = (0..n).map(|k| y[i][k] * v[k]).sum();
            let q_gen = (v[i] * sum.conj()).im - s[i].im;
            let lim = if q_gen > qlim[i].1 + 1e-8 {
                qlim[i].1
            } else if q_gen < qlim[i].0 - 1e-8 {
                qlim[i].0
            } else {
                continue;
            };
            kind[i] = BusType::Pq;
            s[i].im += lim;
            pinned = true;
        }
        if !pinned {
            break;
        }
    }
    GsResult {
        vm: v.iter().map(|x| x.norm()).collect(),
        va: v.iter().map(|x| x.arg()).collect(),
        converged,
        iterations: it,
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    y: &[Vec<C>],
    kind: &[BusType],
    vset: &[Option<f64>],
    s: &[C],
    v: &mut [C],
    tol: f64,
    max_iter: usize,
    it: &mut usize,
) -> bool {
    let n = v.len();
    let mut local = 0;
    while local < max_iter {
        local += 1;
        *it += 1;
        let mut change: f64 = 0.0;
        for i in 0..n {
            if kind[i] == BusType::Slack {
                continue;
            }
            let sum: C = (0..n).map(|k| y[i][k] * v[k]).sum();
            let mut si = s[i];
            if kind[i] == BusType::Pv {
                si.im = (v[i] * sum.conj()).im;
            }
            let others = sum - y[i][i] * v[i];
            let mut vi = ((si / v[i]).conj() - others) / y[i][i];
            if kind[i] == BusType::Pv {
                vi = vi * (vset[i].unwrap() / vi.norm());
            }
            change = change.max((vi - v[i]).norm());
            v[i] = vi;
        }
        if !change.is_finite() {
            return false;
        }
        if change < tol {
            return true;
        }
    }
    false
}
