use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneOptions {
    /// Capped at N/4 for small inputs.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches to the final value.
    pub momentum_switch: usize,
    pub log_every: usize,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            log_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    pub kl: f64,
    pub iterations: usize,
    /// (iteration, KL) every `log_every` iterations.
    pub kl_trace: Vec<(usize, f64)>,
}

fn sq_distances(y: &DMatrix<f64>) -> Vec<f64> {
    let n = y.nrows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = (0..y.ncols()).map(|k| (y[(i, k)] - y[(j, k)]).powi(2)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Symmetrized input affinities p_ij = (p_j|i + p_i|j) / 2N, row-major N×N.
pub fn joint_probabilities(x: &DMatrix<f64>, perplexity: f64) -> Result<Vec<f64>> {
    let n = x.nrows();
    let d = sq_distances(x);
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut found = false;
        let mut p = vec![0.0; n];
        for _ in 0..200 {
            let dmin = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                p[j] = if j == i { 0.0 } else { (-(row[j] - dmin) * beta).exp() };
                sum += p[j];
            }
            let mut h = 0.0;
            for j in 0..n {
                if p[j] > 0.0 {
                    let pj = p[j] / sum;
                    h -= pj * pj.ln();
                    p[j] = pj;
                }
            }
            let diff = h - target;
            if diff.abs() < 1e-5 {
                found = true;
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if !found {
            return Err(Error::Perplexity { point: i });
        }
        cond[i * n..(i + 1) * n].copy_from_slice(&p);
    }
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok(joint)
}

/// Student-t output affinities q_ij, row-major N×N, and the kernel values.
pub fn output_probabilities(y: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
            let v = 1.0 / (1.0 + d);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (num.iter().map(|v| v / z).collect(), num)
}

/// KL(P‖Q) and its gradient 4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)⁻¹.
pub fn kl_and_gradient(p: &[f64], y: &[[f64; 2]]) -> (f64, Vec<[f64; 2]>) {
    let n = y.len();
    let (q, num) = output_probabilities(y);
    let mut kl = 0.0;
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            if pij > 0.0 {
                kl += pij * (pij / q[i * n + j].max(f64::MIN_POSITIVE)).ln();
            }
            let m = 4.0 * (pij - q[i * n + j]) * num[i * n + j];
            grad[i][0] += m * (y[i][0] - y[j][0]);
            grad[i][1] += m * (y[i][1] - y[j][1]);
        }
    }
    (kl, grad)
}

pub fn effective_perplexity(n: usize, requested: f64) -> f64 {
    requested.min(n as f64 / 4.0)
}

pub fn tsne(x: &DMatrix<f64>, opts: &TsneOptions, seed: u64) -> Result<Embedding> {
    let n = x.nrows();
    let perplexity = effective_perplexity(n, opts.perplexity);
    if perplexity < 1.0 || n as f64 <= 3.0 * perplexity {
        return Err(Error::InvalidArgument(format!("t-SNE needs N > 3·perplexity (N = {n}, perplexity = {perplexity})")));
    }
    let p = joint_probabilities(x, perplexity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut vel = vec![[0.0; 2]; n];
    let exaggerated: Vec<f64> = p.iter().map(|v| v * opts.exaggeration).collect();
    let mut trace = Vec::new();
    let mut kl = 0.0;
    for it in 0..opts.iterations {
        let early = it < opts.exaggeration_iters;
        let (_, grad) = kl_and_gradient(if early { &exaggerated } else { &p }, &y);
        let mom = if it < opts.momentum_switch { opts.momentum_initial } else { opts.momentum_final };
        for i in 0..n {
            for k in 0..2 {
                vel[i][k] = mom * vel[i][k] - opts.learning_rate * grad[i][k];
                y[i][k] += vel[i][k];
            }
        }
        let cx = y.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|v| v[1]).sum::<f64>() / n as f64;
        y.iter_mut().for_each(|v| {
            v[0] -= cx;
            v[1] -= cy;
        });
        if (it + 1) % opts.log_every == 0 || it + 1 == opts.iterations {
            kl = kl_and_gradient(&p, &y).0;
            trace.push((it + 1, kl));
        }
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::NonFinite("t-SNE embedding".into()));
    }
    Ok(Embedding { points: y, kl, iterations: opts.iterations, kl_trace: trace })
}
