//! Dense decomposition helpers: SVD, pseudoinverse application, kernel and
//! range bases, and span comparisons. Everything is dense; the crate targets
//! desk-scale problems where correctness beats sparsity.
//!
//! The SVD is a one-sided Jacobi iteration. Coboundary and discrepancy
//! operators routinely carry exactly repeated singular values (orthogonal
//! equal-norm rows per edge block), which Golub-Kahan implementations handle
//! poorly; Jacobi converges to full accuracy regardless of clustering.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{rank_cutoff_factor, real, Real};

/// Thin singular value decomposition `m = U diag(sigma) V^T` with
/// `k = min(nrows, ncols)` columns in both factors and `sigma` sorted
/// descending. Columns of `U` matching exactly zero singular values are zero.
#[derive(Debug, Clone)]
pub struct Svd<T: Real> {
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    pub v: DMatrix<T>,
}

fn jacobi_tall<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, DVector<T>, DMatrix<T>) {
    let n = a.ncols();
    let mut b = a.clone();
    let mut v = DMatrix::<T>::identity(n, n);
    let tol = T::default_epsilon() * real::<T>(8.0);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let bp = b.column(p);
                let bq = b.column(q);
                let alpha = bp.norm_squared();
                let beta = bq.norm_squared();
                let gamma = bp.dot(&bq);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma * real::<T>(2.0));
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..b.nrows() {
                    let bip = b[(i, p)];
                    let biq = b[(i, q)];
                    b[(i, p)] = c * bip - s * biq;
                    b[(i, q)] = s * bip + c * biq;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<T> = (0..n).map(|j| b.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let mut sigma = DVector::zeros(n);
    let mut u = DMatrix::zeros(a.nrows(), n);
    let mut v_sorted = DMatrix::zeros(n, n);
    for (rank, &j) in order.iter().enumerate() {
        sigma[rank] = norms[j];
        if norms[j] > T::zero() {
            u.set_column(rank, &(b.column(j) / norms[j]));
        }
        v_sorted.set_column(rank, &v.column(j));
    }
    (u, sigma, v_sorted)
}

/// One-sided Jacobi SVD; wide inputs are factored through their transpose.
pub fn svd<T: Real>(m: &DMatrix<T>) -> Svd<T> {
    if m.nrows() >= m.ncols() {
        let (u, sigma, v) = jacobi_tall(m);
        Svd { u, sigma, v }
    } else {
        let (u, sigma, v) = jacobi_tall(&m.transpose());
        Svd { u: v, sigma, v: u }
    }
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    svd(m).sigma[0]
}

/// Absolute singular-value cutoff `max(m, n) * sigma_max * rel` used for rank
/// decisions on `m`.
pub fn default_cutoff<T: Real>(m: &DMatrix<T>) -> T {
    let (r, c) = m.shape();
    let dim = real::<T>(r.max(c).max(1) as f64);
    let cutoff = dim * spectral_norm(m) * rank_cutoff_factor::<T>();
    if cutoff > T::zero() {
        cutoff
    } else {
        T::default_epsilon()
    }
}

impl<T: Real> Svd<T> {
    /// Minimum-norm least-squares solve using this factorization.
    pub fn solve(&self, b: &DVector<T>, cutoff: T) -> DVector<T> {
        let mut y = self.u.transpose() * b;
        for k in 0..self.sigma.len() {
            y[k] = if self.sigma[k] > cutoff {
                y[k] / self.sigma[k]
            } else {
                T::zero()
            };
        }
        &self.v * y
    }

    pub fn rank(&self, cutoff: T) -> usize {
        self.sigma.iter().filter(|&&s| s > cutoff).count()
    }
}

/// Minimum-norm least-squares solution of `m x = b`.
pub fn pinv_apply<T: Real>(m: &DMatrix<T>, b: &DVector<T>, cutoff: Option<T>) -> DVector<T> {
    assert_eq!(m.nrows(), b.nrows(), "pinv_apply: shape mismatch");
    if m.ncols() == 0 {
        return DVector::zeros(0);
    }
    if m.nrows() == 0 {
        return DVector::zeros(m.ncols());
    }
    let decomposition = svd(m);
    let eps = cutoff.unwrap_or_else(|| cutoff_from(&decomposition, m));
    decomposition.solve(b, eps)
}

fn cutoff_from<T: Real>(decomposition: &Svd<T>, m: &DMatrix<T>) -> T {
    let (r, c) = m.shape();
    let dim = real::<T>(r.max(c).max(1) as f64);
    let cutoff = dim * decomposition.sigma.max() * rank_cutoff_factor::<T>();
    if cutoff > T::zero() {
        cutoff
    } else {
        T::default_epsilon()
    }
}

/// Moore-Penrose pseudoinverse of `m`.
pub fn pinv<T: Real>(m: &DMatrix<T>, cutoff: Option<T>) -> DMatrix<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let decomposition = svd(m);
    let eps = cutoff.unwrap_or_else(|| cutoff_from(&decomposition, m));
    let mut scaled = decomposition.v.clone();
    for k in 0..decomposition.sigma.len() {
        let factor = if decomposition.sigma[k] > eps {
            T::one() / decomposition.sigma[k]
        } else {
            T::zero()
        };
        let mut column = scaled.column_mut(k);
        column *= factor;
    }
    scaled * decomposition.u.transpose()
}

/// Orthonormal basis of `ker(m)` as matrix columns.
///
/// Singular values at or below `cutoff` count as zero. Wide matrices are
/// padded with zero rows so the right factor spans the whole domain.
pub fn kernel_basis<T: Real>(m: &DMatrix<T>, cutoff: Option<T>) -> DMatrix<T> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let square = if m.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let decomposition = svd(&square);
    let eps = cutoff.unwrap_or_else(|| cutoff_from(&decomposition, m));
    let keep: Vec<usize> = (0..decomposition.sigma.len())
        .filter(|&k| decomposition.sigma[k] <= eps)
        .collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        basis.set_column(col, &decomposition.v.column(k));
    }
    basis
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis<T: Real>(m: &DMatrix<T>, cutoff: Option<T>) -> DMatrix<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let decomposition = svd(m);
    let eps = cutoff.unwrap_or_else(|| cutoff_from(&decomposition, m));
    let keep: Vec<usize> = (0..decomposition.sigma.len())
        .filter(|&k| decomposition.sigma[k] > eps)
        .collect();
    let mut basis = DMatrix::zeros(m.nrows(), keep.len());
    for (col, &k) in keep.iter().enumerate() {
        basis.set_column(col, &decomposition.u.column(k));
    }
    basis
}

/// Numerical rank of `m`.
pub fn rank<T: Real>(m: &DMatrix<T>, cutoff: Option<T>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let decomposition = svd(m);
    let eps = cutoff.unwrap_or_else(|| cutoff_from(&decomposition, m));
    decomposition.rank(eps)
}

/// Component of `b` orthogonal to the column space of `m`.
pub fn range_complement_residual<T: Real>(
    m: &DMatrix<T>,
    b: &DVector<T>,
    cutoff: Option<T>,
) -> DVector<T> {
    let basis = range_basis(m, cutoff);
    if basis.ncols() == 0 {
        return b.clone();
    }
    b - &basis * (basis.transpose() * b)
}

/// Sine of the largest principal angle between the spans of two orthonormal
/// bases, symmetrized over both directions. Zero iff the spans agree.
pub fn span_gap<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    fn directed<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
        if a.ncols() == 0 {
            return T::zero();
        }
        if b.ncols() == 0 {
            return T::one();
        }
        // (I - b b^T) a has spectral norm sin(theta_max).
        let residual = a - b * (b.transpose() * a);
        spectral_norm(&residual)
    }
    let fwd = directed(a, b);
    let bwd = directed(b, a);
    if fwd > bwd {
        fwd
    } else {
        bwd
    }
}

/// Smallest eigenvalue above the kernel cutoff of a symmetric PSD matrix;
/// `None` when the matrix is (numerically) zero.
pub fn smallest_positive_eigenvalue<T: Real>(m: &DMatrix<T>) -> Option<T> {
    if m.nrows() == 0 {
        return None;
    }
    let eigen = m.clone().symmetric_eigen();
    let scale = eigen.eigenvalues.amax().max(T::one());
    eigen
        .eigenvalues
        .iter()
        .copied()
        .filter(|&v| v > real::<T>(1e-10) * scale)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let eigen = m.clone().symmetric_eigen();
    let mut min = eigen.eigenvalues[0];
    for v in eigen.eigenvalues.iter() {
        if *v < min {
            min = *v;
        }
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn pinv_apply_matches_exact_solve_on_invertible_systems() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0_f64, 1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, -7.0]);
        let x = pinv_apply(&m, &b, None);
        let exact = m.clone().lu().solve(&b).unwrap();
        assert!((x - exact).norm() < 1e-12);
    }

    #[test]
    fn pinv_apply_is_minimum_norm_on_rank_deficient_systems() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let m = DMatrix::from_row_slice(1, 2, &[1.0_f64, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = pinv_apply(&m, &b, None);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_basis_of_wide_matrix_is_complete() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0_f64, 0.0, 0.0]);
        let k = kernel_basis(&m, None);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-14);
        let gram = k.transpose() * &k;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn span_gap_detects_equal_and_distinct_spans() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0_f64, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 1, &[0.0_f64, 1.0, 0.0]);
        assert!(span_gap(&a, &a) < 1e-14);
        assert!((span_gap(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factorization_is_accurate_on_random_and_clustered_spectra() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300 {
            let m = rng.random_range(1..=9);
            let n = rng.random_range(1..=9);
            let mut a = DMatrix::<f64>::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            if trial % 3 == 0 && m > 1 && n > 1 {
                // Force repeated singular values: orthogonal equal-norm rows.
                a.fill(0.0);
                let k = m.min(n);
                for i in 0..k {
                    a[(i, i)] = 1.25;
                }
            }
            let f = svd(&a);
            let recon = &f.u * DMatrix::from_diagonal(&f.sigma) * f.v.transpose();
            assert!(
                (recon - &a).norm() < 1e-12 * (1.0 + a.norm()),
                "trial {trial}: reconstruction failed"
            );
            let vtv = f.v.transpose() * &f.v;
            assert!((vtv - DMatrix::<f64>::identity(f.v.ncols(), f.v.ncols())).norm() < 1e-12);
            // Consistent wide systems solve exactly.
            let z = DVector::<f64>::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = &a * &z;
            let x = pinv_apply(&a, &b, None);
            let sigma_min_kept = f
                .sigma
                .iter()
                .copied()
                .filter(|&s| s > default_cutoff(&a))
                .fold(f64::INFINITY, f64::min);
            if sigma_min_kept > 1e-6 {
                assert!(
                    (&a * &x - &b).norm() < 1e-9 * (1.0 + b.norm()),
                    "trial {trial}: solve residual"
                );
            }
        }
    }
}
