//! Row-echelon LU with partial pivoting for rectangular, possibly
//! rank-deficient matrices (Peters-Wilkinson form).

use nalgebra::DMatrix;

/// `P A = L U` up to residual rows whose entries all fell under the tolerance.
#[derive(Clone, Debug)]
pub struct EchelonLu {
    /// `perm[k]` is the original row placed at position `k`.
    pub perm: Vec<usize>,
    /// m×r, unit lower trapezoidal.
    pub l: DMatrix<f64>,
    /// r×n, row echelon.
    pub u: DMatrix<f64>,
    /// Column of each pivot.
    pub pivot_cols: Vec<usize>,
}

impl EchelonLu {
    pub fn rank(&self) -> usize {
        self.pivot_cols.len()
    }

    /// `P⁻¹ L U`, for checking the factorization.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lu = &self.l * &self.u;
        let mut a = DMatrix::zeros(lu.nrows(), lu.ncols());
        for (k, &row) in self.perm.iter().enumerate() {
            a.set_row(row, &lu.row(k));
        }
        a
    }

    /// Top r×r block of L.
    pub fn l_b(&self) -> DMatrix<f64> {
        let r = self.rank();
        self.l.rows(0, r).into_owned()
    }

    /// Bottom (m−r)×r block of L.
    pub fn m_block(&self) -> DMatrix<f64> {
        let r = self.rank();
        self.l.rows(r, self.l.nrows() - r).into_owned()
    }

    /// `L L_b⁻¹`, whose top block is the identity.
    pub fn change_of_basis(&self) -> DMatrix<f64> {
        let r = self.rank();
        if r == 0 {
            return DMatrix::zeros(self.l.nrows(), 0);
        }
        let lb = self.l_b();
        // L_b is unit lower triangular; solve X L_b = L row by row.
        let mut out = DMatrix::zeros(self.l.nrows(), r);
        for i in 0..self.l.nrows() {
            for j in (0..r).rev() {
                let mut s = self.l[(i, j)];
                for k in j + 1..r {
                    s -= out[(i, k)] * lb[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }
}

/// Factors `a` column by column, choosing the largest remaining entry as
/// pivot (first one on ties). Columns whose remaining entries are all at or
/// below `tol` are skipped.
pub fn echelon_lu(a: &DMatrix<f64>, tol: f64) -> EchelonLu {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut l = DMatrix::<f64>::zeros(m, m.min(n));
    let mut pivot_cols = Vec::new();
    let mut k = 0;
    for j in 0..n {
        if k == m {
            break;
        }
        let mut p = k;
        for i in k + 1..m {
            if w[(i, j)].abs() > w[(p, j)].abs() {
                p = i;
            }
        }
        if w[(p, j)].abs() <= tol {
            continue;
        }
        if p != k {
            w.swap_rows(p, k);
            perm.swap(p, k);
            for c in 0..k {
                l.swap((p, c), (k, c));
            }
        }
        let pivot = w[(k, j)];
        for i in k + 1..m {
            let f = w[(i, j)] / pivot;
            l[(i, k)] = f;
            if f != 0.0 {
                for c in 0..n {
                    w[(i, c)] -= f * w[(k, c)];
                }
                w[(i, j)] = 0.0;
            }
        }
        l[(k, k)] = 1.0;
        pivot_cols.push(j);
        k += 1;
    }
    EchelonLu { perm, l: l.columns(0, k).into_owned(), u: w.rows(0, k).into_owned(), pivot_cols }
}

pub fn numerical_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    echelon_lu(a, tol).rank()
}
