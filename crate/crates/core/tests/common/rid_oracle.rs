//! Exhaustive minimal-controllability-set oracle. Rank comes from an SVD, not
//! from the library's LU.

use nalgebra::DMatrix;
use rand::Rng;

pub fn svd_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let scale = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > 1e-9 * scale).count()
}

/// Controllers present in every r-subset of rows with full rank r.
pub fn critical_by_enumeration(a: &DMatrix<f64>) -> Vec<usize> {
    let m = a.nrows();
    let r = svd_rank(a);
    let mut in_all = vec![true; m];
    let mut found = false;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != r {
            continue;
        }
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if svd_rank(&a.select_rows(&rows)) == r {
            found = true;
            for (i, keep) in in_all.iter_mut().enumerate() {
                *keep &= mask & (1 << i) != 0;
            }
        }
    }
    assert!(found, "no full-rank subset");
    (0..m).filter(|&i| in_all[i]).collect()
}

/// Random m×n matrix of rank ≤ k with occasional zero and duplicated rows.
pub fn structured_matrix(rng: &mut impl Rng, m: usize, n: usize, k: usize, integer: bool) -> DMatrix<f64> {
    let draw = |rng: &mut dyn rand::RngCore| -> f64 {
        if integer {
            rng.random_range(-2i32..=2) as f64
        } else {
            rng.random_range(-1.0..1.0)
        }
    };
    let b = DMatrix::from_fn(m, k, |_, _| draw(rng));
    let c = DMatrix::from_fn(k, n, |_, _| draw(rng));
    let mut a = b * c;
    for i in 0..m {
        let roll: f64 = rng.random();
        if roll < 0.1 {
            a.row_mut(i).fill(0.0);
        } else if roll < 0.2 && i > 0 {
            let j = rng.random_range(0..i);
            let f = if integer { 2.0 } else { rng.random_range(0.5..2.0) };
            let src = a.row(j) * f;
            a.set_row(i, &src);
        }
    }
    a
}
