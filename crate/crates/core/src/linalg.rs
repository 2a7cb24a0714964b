//! Small dense symmetric matrix helpers: the information-matrix newtype,
//! log-determinants and inverses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Relative pivot size below which the pivoted Cholesky hands over to LU.
const CHOLESKY_PIVOT_TOL: f64 = 1e-14;

/// A `p x p` symmetric positive-semidefinite information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix(DMatrix<f64>);

impl FisherMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `self += w * other`.
    pub fn add_scaled(&mut self, w: f64, other: &FisherMatrix) {
        self.0 += &other.0 * w;
    }

    pub fn log_det(&self) -> f64 {
        log_det(&self.0)
    }

    /// Inverse, or `None` when the matrix is singular to working precision.
    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        inverse_spd(&self.0)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.0.amax().max(f64::MIN_POSITIVE);
        let p = self.dim();
        (0..p).all(|i| (0..i).all(|j| (self.0[(i, j)] - self.0[(j, i)]).abs() <= rel_tol * scale))
    }

    /// All eigenvalues `>= -rel_tol * spectral norm`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let sym = (&self.0 + self.0.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let norm = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        eig.iter().all(|&v| v >= -rel_tol * norm)
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let sym = (&self.0 + self.0.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let norm = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        eig.iter().filter(|v| **v > rel_tol * norm).count()
    }
}

impl std::ops::Deref for FisherMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Symmetric diagonal equilibration: returns `(D^{-1/2} A D^{-1/2}, diag(A))`,
/// or `None` when some diagonal entry is not strictly positive.
fn equilibrate(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let p = a.nrows();
    let diag: Vec<f64> = (0..p).map(|i| a[(i, i)]).collect();
    if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return None;
    }
    let s: Vec<f64> = diag.iter().map(|d| d.sqrt().recip()).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| a[(i, j)] * s[i] * s[j]);
    Some((scaled, diag))
}

/// `log |A|` for a symmetric positive-semidefinite `A`.
///
/// Uses a diagonally pivoted Cholesky factorization of the equilibrated
/// matrix and falls back to LU when a pivot drops below `1e-14 * trace`.
/// Singular matrices return `f64::NEG_INFINITY`.
pub fn log_det(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    if p == 0 {
        return 0.0;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let Some((scaled, diag)) = equilibrate(a) else {
        return lu_log_det(a);
    };
    let log_scale: f64 = diag.iter().map(|d| d.ln()).sum();
    match pivoted_cholesky_log_det(&scaled) {
        Some(ld) => ld + log_scale,
        None => {
            let ld = lu_log_det(&scaled);
            if ld.is_finite() {
                ld + log_scale
            } else {
                ld
            }
        }
    }
}

fn pivoted_cholesky_log_det(s: &DMatrix<f64>) -> Option<f64> {
    let p = s.nrows();
    let tol = CHOLESKY_PIVOT_TOL * s.trace();
    let mut work = s.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut log_det = 0.0;
    for k in 0..p {
        // choose the largest remaining diagonal entry
        let (mut best, mut best_val) = (k, work[(perm[k], perm[k])]);
        for (idx, &r) in perm.iter().enumerate().skip(k + 1) {
            if work[(r, r)] > best_val {
                best = idx;
                best_val = work[(r, r)];
            }
        }
        perm.swap(k, best);
        let piv = best_val;
        if !(piv >= tol) {
            return None;
        }
        log_det += piv.ln();
        let pk = perm[k];
        let root = piv.sqrt();
        // column of L below the pivot, stored in place
        for &r in &perm[k + 1..] {
            work[(r, pk)] /= root;
        }
        for (ii, &r) in perm.iter().enumerate().skip(k + 1) {
            let lr = work[(r, pk)];
            for &c in &perm[k + 1..=ii] {
                let v = work[(r, c)] - lr * work[(c, pk)];
                work[(r, c)] = v;
                work[(c, r)] = v;
            }
        }
    }
    Some(log_det)
}

fn lu_log_det(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let lu = a.clone().lu();
    let u = lu.u();
    let max_piv = (0..p).fold(0.0_f64, |m, i| m.max(u[(i, i)].abs()));
    if max_piv == 0.0 || (0..p).any(|i| u[(i, i)].abs() <= f64::EPSILON * p as f64 * max_piv) {
        return f64::NEG_INFINITY;
    }
    let det = lu.determinant();
    if det > 0.0 && det.is_finite() {
        det.ln()
    } else if det > 0.0 {
        (0..p).map(|i| u[(i, i)].abs().ln()).sum()
    } else {
        f64::NEG_INFINITY
    }
}

/// Inverse of a symmetric positive-definite matrix via the equilibrated
/// Cholesky factorization, with an LU fallback.
pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !log_det(a).is_finite() {
        return None;
    }
    let p = a.nrows();
    let (scaled, diag) = equilibrate(a)?;
    let inv_scaled = match scaled.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => scaled.try_inverse()?,
    };
    let s: Vec<f64> = diag.iter().map(|d| d.sqrt().recip()).collect();
    let mut inv = DMatrix::from_fn(p, p, |i, j| inv_scaled[(i, j)] * s[i] * s[j]);
    // enforce exact symmetry
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Some(inv)
}

/// Numerical rank of the row set via modified Gram-Schmidt; a row counts as
/// independent when its residual norm exceeds `rel_tol` times its own norm.
pub fn row_rank(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        extends_basis(&mut basis, r, rel_tol);
    }
    basis.len()
}

/// Orthogonalizes `row` against `basis`; pushes the normalized residual and
/// returns true when it is numerically independent.
pub(crate) fn extends_basis(basis: &mut Vec<Vec<f64>>, row: &[f64], rel_tol: f64) -> bool {
    let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm0 > 0.0) || !norm0.is_finite() {
        return false;
    }
    let mut r: Vec<f64> = row.iter().map(|v| v / norm0).collect();
    for _ in 0..2 {
        for b in basis.iter() {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in r.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
    }
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > rel_tol {
        r.iter_mut().for_each(|v| *v /= norm);
        basis.push(r);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(log_det(&DMatrix::identity(3, 3)), 0.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0]));
        assert!((log_det(&d) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn singular_is_sentinel() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(log_det(&a), f64::NEG_INFINITY);
        assert!(inverse_spd(&a).is_none());
        assert_eq!(log_det(&DMatrix::zeros(3, 3)), f64::NEG_INFINITY);
        let mut z = DMatrix::identity(3, 3);
        z[(1, 1)] = 0.0;
        assert_eq!(log_det(&z), f64::NEG_INFINITY);
    }

    #[test]
    fn matches_lu_on_badly_scaled_spd() {
        // Gram matrix of (1, x, x^2) over x in [80, 200]
        let xs = [80.0, 120.0, 157.0, 200.0];
        let mut a = DMatrix::<f64>::zeros(3, 3);
        for x in xs {
            let h = nalgebra::DVector::from_vec(vec![1.0, x, x * x]);
            a += &h * h.transpose();
        }
        let direct = a.clone().lu().determinant().ln();
        assert!((log_det(&a) - direct).abs() < 1e-8);
        let inv = inverse_spd(&a).unwrap();
        let eye = &a * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[(i, j)] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rank_of_rows() {
        let rows = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(row_rank(&rows, 1e-10), 2);
        assert_eq!(row_rank(&rows[..2], 1e-10), 1);
    }
}
