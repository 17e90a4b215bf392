use gridresponder::rl::dist::{log_prob, sample};
use gridresponder::rl::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn arch() -> Architecture {
    Architecture { obs_dim: 5, hidden: vec![7, 6], categorical: vec![2, 4, 3], continuous: 2 }
}

pub fn random_net(seed: u64) -> PolicyNet {
    let mut net = PolicyNet::init(arch(), seed, -0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    // larger head weights so every gradient path carries signal
    for p in &mut net.params {
        *p += rng.random_range(-0.5..0.5);
    }
    net
}

pub fn random_obs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Max relative error between the analytic directional derivative and a
/// central difference, over `dirs` random unit directions.
pub fn directional_check(
    params: &[f64],
    grad: &[f64],
    f: &dyn Fn(&[f64]) -> f64,
    dirs: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..dirs {
        let mut d: Vec<f64> = (0..params.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        d.iter_mut().for_each(|x| *x /= norm);
        let plus: Vec<f64> = params.iter().zip(&d).map(|(p, di)| p + h * di).collect();
        let minus: Vec<f64> = params.iter().zip(&d).map(|(p, di)| p - h * di).collect();
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        let an: f64 = grad.iter().zip(&d).map(|(g, di)| g * di).sum();
        worst = worst.max(rel_err(an, fd));
    }
    worst
}

pub fn with_params(net: &PolicyNet, p: &[f64]) -> PolicyNet {
    PolicyNet::from_params(net.arch.clone(), p.to_vec()).unwrap()
}

pub fn batch_fixture(net: &PolicyNet, seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<SampledAction>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = vec![];
    let mut acts = vec![];
    let mut old = vec![];
    let mut adv = vec![];
    let mut ret = vec![];
    let offsets = [0.0, 1.5f64.ln(), 0.5f64.ln(), 0.1, -0.05];
    for i in 0..n {
        let o = random_obs(&mut rng, net.arch.obs_dim);
        let out = net.forward(&o).out;
        let a = sample(&out, &mut rng);
        old.push(log_prob(&out, &a) - offsets[i % offsets.len()]);
        obs.push(o);
        acts.push(a);
        adv.push(rng.random_range(-2.0..2.0));
        ret.push(rng.random_range(-3.0..3.0));
    }
    (obs, acts, old, adv, ret)
}

pub fn samples<'a>(
    obs: &'a [Vec<f64>],
    acts: &'a [SampledAction],
    old: &[f64],
    adv: &[f64],
    ret: &[f64],
) -> Vec<PpoSample<'a>> {
    (0..obs.len())
        .map(|i| PpoSample { obs: &obs[i], action: &acts[i], old_log_prob: old[i], advantage: adv[i], ret: ret[i] })
        .collect()
}
