use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ActionSpec;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub categorical: Vec<usize>,
    pub continuous: usize,
}

impl Architecture {
    pub fn new(obs_dim: usize, hidden: Vec<usize>, spec: &ActionSpec) -> Self {
        Self { obs_dim, hidden, categorical: spec.categorical.clone(), continuous: spec.continuous }
    }

    pub fn action_spec(&self) -> ActionSpec {
        ActionSpec { categorical: self.categorical.clone(), continuous: self.continuous }
    }

    /// Named tensors in storage order.
    pub fn layout(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            out.push(TensorInfo { name, shape, offset });
            offset += len;
        };
        let mut fan_in = self.obs_dim;
        for (k, &h) in self.hidden.iter().enumerate() {
            push(format!("trunk.{k}.weight"), vec![h, fan_in]);
            push(format!("trunk.{k}.bias"), vec![h]);
            fan_in = h;
        }
        for (k, &n) in self.categorical.iter().enumerate() {
            push(format!("categorical.{k}.weight"), vec![n, fan_in]);
            push(format!("categorical.{k}.bias"), vec![n]);
        }
        if self.continuous > 0 {
            push("gaussian.mean.weight".into(), vec![self.continuous, fan_in]);
            push("gaussian.mean.bias".into(), vec![self.continuous]);
            push("gaussian.log_std".into(), vec![self.continuous]);
        }
        push("value.weight".into(), vec![1, fan_in]);
        push("value.bias".into(), vec![1]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|t| t.len()).sum()
    }

    fn trunk_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.obs_dim)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Raw head outputs for one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs {
    pub logits: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Clamped to [`LOG_STD_MIN`], [`LOG_STD_MAX`].
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Upstream gradient with the same shape as [`HeadOutputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub logits: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

impl HeadGrads {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            logits: arch.categorical.iter().map(|&n| vec![0.0; n]).collect(),
            mean: vec![0.0; arch.continuous],
            log_std: vec![0.0; arch.continuous],
            value: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input followed by each hidden activation.
    acts: Vec<Vec<f64>>,
    pub out: HeadOutputs,
}

/// Shared tanh trunk with categorical, squashed-Gaussian and value heads.
/// All weights live in one flat vector in [`Architecture::layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    pub arch: Architecture,
    pub params: Vec<f64>,
    layout: Vec<TensorInfo>,
    slots: Slots,
}

type Span = std::ops::Range<usize>;

#[derive(Clone, Debug, PartialEq)]
struct Slots {
    trunk: Vec<(Span, Span)>,
    categorical: Vec<(Span, Span)>,
    mean: Option<(Span, Span)>,
    log_std: Span,
    value: (Span, Span),
}

impl Slots {
    fn new(arch: &Architecture, layout: &[TensorInfo]) -> Self {
        let get = |name: &str| layout.iter().find(|t| t.name == name).expect("tensor in layout").range();
        let pair = |p: &str| (get(&format!("{p}.weight")), get(&format!("{p}.bias")));
        Slots {
            trunk: (0..arch.hidden.len()).map(|k| pair(&format!("trunk.{k}"))).collect(),
            categorical: (0..arch.categorical.len()).map(|k| pair(&format!("categorical.{k}"))).collect(),
            mean: (arch.continuous > 0).then(|| pair("gaussian.mean")),
            log_std: if arch.continuous > 0 { get("gaussian.log_std") } else { 0..0 },
            value: pair("value"),
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(i, bi)| bi + w[i * n..(i + 1) * n].iter().zip(x).map(|(a, c)| a * c).sum::<f64>()));
}

/// Accumulates dW += g xᵀ, db += g and returns Wᵀ g.
fn affine_back(w: &[f64], x: &[f64], g: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n = x.len();
    let mut dx = vec![0.0; n];
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        db[i] += gi;
        let row = &w[i * n..(i + 1) * n];
        let drow = &mut dw[i * n..(i + 1) * n];
        for j in 0..n {
            drow[j] += gi * x[j];
            dx[j] += gi * row[j];
        }
    }
    dx
}

impl PolicyNet {
    pub fn zeros(arch: Architecture) -> Self {
        let layout = arch.layout();
        let n = layout.iter().map(|t| t.len()).sum();
        let slots = Slots::new(&arch, &layout);
        Self { arch, params: vec![0.0; n], layout, slots }
    }

    /// Uniform fan-in scaled initialization; policy heads start near uniform.
    pub fn init(arch: Architecture, seed: u64, log_std_init: f64) -> Self {
        let mut net = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in net.layout.clone() {
            let r = t.range();
            if t.name.ends_with("weight") {
                let fan_in = t.shape[1] as f64;
                let policy_head = t.name.starts_with("categorical") || t.name.starts_with("gaussian");
                let gain = if policy_head { 0.01 } else { 1.0 };
                let a = gain * (3.0 / fan_in).sqrt();
                for p in &mut net.params[r] {
                    *p = rng.random_range(-a..=a);
                }
            } else if t.name == "gaussian.log_std" {
                net.params[r].fill(log_std_init);
            }
        }
        net
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch);
        if params.len() != net.params.len() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", net.params.len(), params.len())));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layout(&self) -> &[TensorInfo] {
        &self.layout
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.iter().find(|t| t.name == name).map(|t| &self.params[t.range()])
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.params.iter().position(|p| !p.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let t = self.layout.iter().find(|t| t.range().contains(&i)).unwrap();
                Err(Error::NonFinite(format!("parameter {} of tensor {}", i - t.offset, t.name)))
            }
        }
    }

    pub fn forward(&self, obs: &[f64]) -> ForwardCache {
        debug_assert_eq!(obs.len(), self.arch.obs_dim);
        let mut acts = vec![obs.to_vec()];
        let mut buf = Vec::new();
        for (wr, br) in &self.slots.trunk {
            affine(&self.params[wr.clone()], &self.params[br.clone()], acts.last().unwrap(), &mut buf);
            acts.push(buf.iter().map(|z| z.tanh()).collect());
        }
        let h = acts.last().unwrap();
        let mut logits = Vec::with_capacity(self.arch.categorical.len());
        for (wr, br) in &self.slots.categorical {
            affine(&self.params[wr.clone()], &self.params[br.clone()], h, &mut buf);
            logits.push(buf.clone());
        }
        let (mut mean, mut log_std) = (vec![], vec![]);
        if let Some((wr, br)) = &self.slots.mean {
            affine(&self.params[wr.clone()], &self.params[br.clone()], h, &mut mean);
            log_std = self.params[self.slots.log_std.clone()].iter().map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        }
        let mut v = Vec::new();
        let (wr, br) = &self.slots.value;
        affine(&self.params[wr.clone()], &self.params[br.clone()], h, &mut v);
        ForwardCache { out: HeadOutputs { logits, mean, log_std, value: v[0] }, acts }
    }

    /// Accumulates into `grad` the parameter gradient of Σ g·output.
    pub fn backward(&self, cache: &ForwardCache, g: &HeadGrads, grad: &mut [f64]) {
        let h = cache.acts.last().unwrap();
        let mut dh = vec![0.0; h.len()];
        let add = |dx: Vec<f64>, dh: &mut Vec<f64>| dh.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
        for (gl, (wr, br)) in g.logits.iter().zip(&self.slots.categorical) {
            let (dw, db) = split_two(grad, wr.clone(), br.clone());
            add(affine_back(&self.params[wr.clone()], h, gl, dw, db), &mut dh);
        }
        if let Some((wr, br)) = &self.slots.mean {
            let (dw, db) = split_two(grad, wr.clone(), br.clone());
            add(affine_back(&self.params[wr.clone()], h, &g.mean, dw, db), &mut dh);
            for (j, i) in self.slots.log_std.clone().enumerate() {
                let raw = self.params[i];
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                    grad[i] += g.log_std[j];
                }
            }
        }
        let (wr, br) = &self.slots.value;
        let (dw, db) = split_two(grad, wr.clone(), br.clone());
        add(affine_back(&self.params[wr.clone()], h, &[g.value], dw, db), &mut dh);

        for k in (0..self.arch.hidden.len()).rev() {
            let a = &cache.acts[k + 1];
            let dz: Vec<f64> = dh.iter().zip(a).map(|(d, y)| d * (1.0 - y * y)).collect();
            let (wr, br) = &self.slots.trunk[k];
            let (dw, db) = split_two(grad, wr.clone(), br.clone());
            dh = affine_back(&self.params[wr.clone()], &cache.acts[k], &dz, dw, db);
        }
    }

    /// Parameter indices that only the value head touches.
    pub fn value_head_range(&self) -> std::ops::Range<usize> {
        self.slots.value.0.start..self.slots.value.1.end
    }

    pub fn trunk_width(&self) -> usize {
        self.arch.trunk_width()
    }
}

/// Two disjoint mutable windows of `v`, `a` before `b`.
fn split_two(v: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = v.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}
