//! Dense rank computations and a sparse least-squares solver.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Default relative SVD threshold for numerical rank.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-8;

/// Numerical rank: number of singular values above `rel_tol * σ_max`.
pub fn rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub fn rank_real(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// column space of `m` in `C^{nrows}`.
pub fn cokernel_basis(m: &DMatrix<Complex64>, rel_tol: f64) -> DMatrix<Complex64> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad to square so the SVD returns a full left basis
    let cols = m.ncols().max(n);
    let mut padded = DMatrix::<Complex64>::zeros(n, cols);
    padded.view_mut((0, 0), (n, m.ncols())).copy_from(m);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max == 0.0 || svd.singular_values[i] <= rel_tol * max)
        .collect();
    let mut out = DMatrix::<Complex64>::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Sparse complex matrix in coordinate form.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, v: Complex64) {
        if v != Complex64::new(0.0, 0.0) {
            self.entries.push((row, col, v));
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); self.ncols];
        for &(r, c, v) in &self.entries {
            x[c] += v.conj() * y[r];
        }
        x
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Least squares `min ‖A x − b‖` by conjugate gradients on the normal
/// equations (CGLS). Returns the iterate and its residual norm.
pub fn cgls(a: &SparseMatrix, b: &[Complex64], rel_tol: f64, max_iter: usize) -> (Vec<Complex64>, f64) {
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![zero; a.ncols];
    let mut r = b.to_vec();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (x, 0.0);
    }
    let mut s = a.apply_adjoint(&r);
    let mut p = s.clone();
    let mut gamma: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    let gamma0 = gamma;
    for _ in 0..max_iter {
        if gamma <= (rel_tol * rel_tol * 1e-4) * gamma0 || gamma == 0.0 {
            break;
        }
        let q = a.apply(&p);
        let qq: f64 = q.iter().map(|z| z.norm_sqr()).sum();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        if norm(&r) <= 1e-3 * rel_tol * bnorm {
            break;
        }
        s = a.apply_adjoint(&r);
        let gamma_new: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
    }
    let res = a.apply(&x);
    let resid: f64 = res
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (x, resid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rank_of_rank_two_product() {
        let u = DMatrix::from_fn(6, 2, |i, j| c((i + 2 * j) as f64 + 1.0));
        let v = DMatrix::from_fn(2, 5, |i, j| c(((i + 1) * (j + 3) + i * j * j) as f64));
        assert_eq!(rank(&(u * v), DEFAULT_RANK_THRESHOLD), 2);
        assert_eq!(rank(&DMatrix::zeros(3, 3), DEFAULT_RANK_THRESHOLD), 0);
    }

    #[test]
    fn cokernel_is_orthogonal_to_columns() {
        let m = DMatrix::from_fn(5, 2, |i, j| c(if i == j { 1.0 } else { (i * j) as f64 }));
        let k = cokernel_basis(&m, DEFAULT_RANK_THRESHOLD);
        assert_eq!(k.ncols(), 3);
        let prod = k.adjoint() * &m;
        assert!(prod.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn cgls_solves_consistent_overdetermined_system() {
        let mut a = SparseMatrix::new(4, 2);
        a.push(0, 0, c(1.0));
        a.push(1, 1, c(2.0));
        a.push(2, 0, c(1.0));
        a.push(2, 1, c(1.0));
        a.push(3, 1, Complex64::new(0.0, 1.0));
        let x_true = [c(0.5), Complex64::new(-1.0, 2.0)];
        let b = a.apply(&x_true);
        let (x, resid) = cgls(&a, &b, 1e-12, 100);
        assert!(resid < 1e-10);
        assert!((x[1] - x_true[1]).norm() < 1e-9);
    }

    #[test]
    fn cgls_reports_inconsistency() {
        let mut a = SparseMatrix::new(2, 1);
        a.push(0, 0, c(1.0));
        let b = [c(0.0), c(1.0)];
        let (_, resid) = cgls(&a, &b, 1e-12, 100);
        assert!((resid - 1.0).abs() < 1e-12);
    }
}
