use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// N×d scores.
    pub projection: DMatrix<f64>,
    /// Share of total variance per retained component, descending.
    pub explained_ratio: Vec<f64>,
    /// d×D principal directions (rows), in standardized units.
    pub components: DMatrix<f64>,
    pub mean: Vec<f64>,
    /// Column standard deviations; 0 marks a constant column.
    pub scale: Vec<f64>,
}

/// Z-scores every column; constant columns become zero.
pub fn standardize(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let (n, d) = x.shape();
    let mut z = x.clone();
    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for j in 0..d {
        let col = x.column(j);
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        mean[j] = m;
        let constant = sd <= 1e-12 * m.abs().max(1.0);
        scale[j] = if constant { 0.0 } else { sd };
        for i in 0..n {
            z[(i, j)] = if constant { 0.0 } else { (x[(i, j)] - m) / sd };
        }
    }
    (z, mean, scale)
}

/// Principal component projection of standardized `x` onto `d` directions.
pub fn pca(x: &DMatrix<f64>, d: usize) -> Result<Pca> {
    let (n, cols) = x.shape();
    if n < 2 {
        return Err(Error::InvalidArgument("pca needs at least two rows".into()));
    }
    if d == 0 || d > (n - 1).min(cols) {
        return Err(Error::InvalidArgument(format!("target dimension {d} outside [1, {}]", (n - 1).min(cols))));
    }
    let (z, mean, scale) = standardize(x);
    let svd = z.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut components = DMatrix::zeros(d, cols);
    let mut explained_ratio = Vec::with_capacity(d);
    for (k, &i) in order.iter().take(d).enumerate() {
        let mut row = vt.row(i).clone_owned();
        let big = row.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
        if big < 0.0 {
            row *= -1.0;
        }
        components.set_row(k, &row);
        let s = svd.singular_values[i];
        explained_ratio.push(if total > 0.0 { s * s / total } else { 0.0 });
    }
    let projection = &z * components.transpose();
    Ok(Pca { projection, explained_ratio, components, mean, scale })
}
