use serde::{Deserialize, Serialize};

use super::lu::{echelon_lu, numerical_rank};
use super::sensitivity::SensitivityMatrix;
use crate::error::{Error, Result};
use crate::grid::DeviceKey;

/// Rows below this norm have no direction and are kept as singleton groups.
const ZERO_ROW: f64 = 1e-300;

/// Rounding allowance on the threshold so that parallel rows link at τ = 1.
const CI_SLACK: f64 = 1e-12;

/// Cosine similarity of two rows.
pub fn coupling_index(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {}", a.len(), b.len())));
    }
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na.sqrt() <= ZERO_ROW || nb.sqrt() <= ZERO_ROW {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Connected components of the graph linking rows with CI ≥ τ, as row
/// indices. Groups are sorted by their smallest member.
pub fn support_group_indices(rows: &[Vec<f64>], tau: f64) -> Result<Vec<Vec<usize>>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty sensitivity matrix".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {tau} outside (0, 1]")));
    }
    let n = rows.len();
    let zero: Vec<bool> = rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt() <= ZERO_ROW).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if zero[i] || zero[j] {
                continue;
            }
            if coupling_index(&rows[i], &rows[j])? >= tau - CI_SLACK {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    Ok(groups)
}

pub fn find_support_groups(psi: &SensitivityMatrix, tau: f64) -> Result<Vec<Vec<DeviceKey>>> {
    Ok(support_group_indices(&psi.values, tau)?
        .into_iter()
        .map(|g| g.into_iter().map(|i| psi.controllers[i]).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerRoles {
    pub controllers: Vec<DeviceKey>,
    pub essential: Vec<DeviceKey>,
    pub critical: Vec<DeviceKey>,
    pub redundant: Vec<DeviceKey>,
    pub support_groups: Vec<Vec<DeviceKey>>,
    pub rank: usize,
    /// Row permutation of the factorization: position k holds controller `permutation[k]`.
    pub permutation: Vec<usize>,
    /// Identity block of the new basis, r×r.
    pub c_e: Vec<Vec<f64>>,
    /// Redundant rows expressed in the essential basis, (m−r)×r.
    pub c_r: Vec<Vec<f64>>,
}

impl ControllerRoles {
    pub fn is_redundant(&self, key: DeviceKey) -> bool {
        self.redundant.contains(&key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoleOptions {
    /// Pivot magnitude below which a column counts as dependent.
    pub rank_tol: f64,
    /// Coupling-index threshold for support groups.
    pub tau: f64,
}

impl Default for RoleOptions {
    fn default() -> Self {
        Self { rank_tol: 1e-10, tau: 0.9 }
    }
}

/// Essential / critical / redundant partition from the LU of Ψ (rows are
/// controllers), plus the support groups.
pub fn classify_controllers(psi: &SensitivityMatrix, opts: &RoleOptions) -> Result<ControllerRoles> {
    let a = psi.matrix();
    let f = echelon_lu(&a, opts.rank_tol);
    let r = f.rank();
    if r == 0 {
        return Err(Error::NoControllableStates);
    }
    let m = a.nrows();
    let essential_rows: Vec<usize> = f.perm[..r].to_vec();
    let critical_rows: Vec<usize> = essential_rows
        .iter()
        .copied()
        .filter(|&e| {
            let keep: Vec<usize> = (0..m).filter(|&i| i != e).collect();
            numerical_rank(&a.select_rows(&keep), opts.rank_tol) < r
        })
        .collect();
    let cer = f.change_of_basis();
    let rows_of = |from: usize, to: usize| -> Vec<Vec<f64>> {
        (from..to).map(|i| cer.row(i).iter().copied().collect()).collect()
    };
    let key = |i: &usize| psi.controllers[*i];
    Ok(ControllerRoles {
        controllers: psi.controllers.clone(),
        essential: essential_rows.iter().map(key).collect(),
        critical: critical_rows.iter().map(key).collect(),
        redundant: f.perm[r..].iter().map(key).collect(),
        support_groups: find_support_groups(psi, opts.tau)?,
        rank: r,
        permutation: f.perm.clone(),
        c_e: rows_of(0, r),
        c_r: rows_of(r, m),
    })
}
