//! Dense symmetric linear algebra: cyclic Jacobi eigendecomposition, label
//! rotation and shifted solves.
//!
//! The decomposition is `G = Vᵀ D V` with the eigenvectors stored as the
//! ROWS of `V`, so rotated labels are `z = V y`. Eigenvalues are sorted
//! ascending and every eigenvector is sign-normalised so that its first
//! component of magnitude above `1e-12` is positive; identical inputs give
//! bit-identical spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Off-diagonal Frobenius norm, relative to `‖G‖_F`, at which Jacobi stops.
pub const JACOBI_TOLERANCE: f64 = 1e-14;
/// Maximum number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Eigenvalues at or below this fraction of the largest magnitude are null.
pub const POSITIVITY_THRESHOLD: f64 = 1e-12;
const SIGN_THRESHOLD: f64 = 1e-12;

/// A dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from row-major entries, averaging each
    /// `(j, k)` / `(k, j)` pair so that the stored matrix is exactly symmetric.
    pub fn new(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "matrix dimension must be at least 1".into(),
            ));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        for j in 0..dim {
            for k in (j + 1)..dim {
                let avg = 0.5 * (data[j * dim + k] + data[k * dim + j]);
                data[j * dim + k] = avg;
                data[k * dim + j] = avg;
            }
        }
        Ok(SymMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for j in 0..dim {
            for k in 0..dim {
                data.push(f(j, k));
            }
        }
        Self::new(dim, data)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_fn(dim, |j, k| if j == k { 1.0 } else { 0.0 })
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::from_fn(diag.len(), |j, k| if j == k { diag[j] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.dim + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        Ok((0..self.dim).map(|j| dot(self.row(j), x)).collect())
    }
}

/// Eigendecomposition `G = Vᵀ D V` of a positive (semi)definite Gram matrix.
///
/// Null directions are only present when built through
/// [`eigendecompose_semidefinite`]; their eigenvalues are stored as exactly
/// `0.0` and occupy the leading positions of the ascending order. `d_min`
/// and the condition number refer to the positive part of the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSpectrum {
    eigvals: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    null_dim: usize,
    cond: f64,
}

impl GramSpectrum {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// Eigenvalues in ascending order.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    /// Row `i` of `V`, the unit eigenvector of `eigvals()[i]`.
    pub fn eigvec(&self, i: usize) -> &[f64] {
        &self.eigvecs[i]
    }

    pub fn eigvecs(&self) -> &[Vec<f64>] {
        &self.eigvecs
    }

    /// Number of exactly-null directions (zero for a positive definite matrix).
    pub fn null_dim(&self) -> usize {
        self.null_dim
    }

    pub fn rank(&self) -> usize {
        self.dim() - self.null_dim
    }

    pub fn is_null(&self, i: usize) -> bool {
        i < self.null_dim
    }

    /// The strictly positive eigenvalues, ascending.
    pub fn positive_eigvals(&self) -> &[f64] {
        &self.eigvals[self.null_dim..]
    }

    /// Smallest positive eigenvalue.
    pub fn d_min(&self) -> f64 {
        self.eigvals[self.null_dim]
    }

    pub fn d_max(&self) -> f64 {
        self.eigvals[self.dim() - 1]
    }

    /// Condition number `d_max / d_min` (of the positive part).
    pub fn cond(&self) -> f64 {
        self.cond
    }

    /// `z = V y`.
    pub fn rotate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), y.len())?;
        Ok(self.eigvecs.iter().map(|v| dot(v, y)).collect())
    }

    /// `y = Vᵀ z`.
    pub fn unrotate(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z.len())?;
        let mut y = vec![0.0; self.dim()];
        for (v, &zi) in self.eigvecs.iter().zip(z) {
            for (yj, &vj) in y.iter_mut().zip(v) {
                *yj += vj * zi;
            }
        }
        Ok(y)
    }

    /// `Vᵀ (cI + D)⁻¹ V y`, the spectral route to `(cI + G)⁻¹ y`.
    pub fn solve_shifted(&self, c: f64, y: &[f64]) -> Result<Vec<f64>> {
        check_shift(c)?;
        let z = self.rotate(y)?;
        let scaled: Vec<f64> = z
            .iter()
            .zip(&self.eigvals)
            .map(|(zi, d)| zi / (c + d))
            .collect();
        self.unrotate(&scaled)
    }

    /// `Vᵀ D V`, for reconstruction checks.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim();
        let mut data = vec![0.0; n * n];
        for (v, &d) in self.eigvecs.iter().zip(&self.eigvals) {
            for j in 0..n {
                let dv = d * v[j];
                for k in 0..n {
                    data[j * n + k] += dv * v[k];
                }
            }
        }
        SymMatrix::new(n, data).expect("reconstruction of a valid spectrum is finite")
    }
}

/// Eigendecomposition of a positive definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] if any eigenvalue is at or below
/// `1e-12 · max|d|`.
pub fn eigendecompose(m: &SymMatrix) -> Result<GramSpectrum> {
    let (eigvals, eigvecs) = jacobi_sorted(m)?;
    let threshold = POSITIVITY_THRESHOLD * max_abs(&eigvals);
    if let Some(&bad) = eigvals.iter().find(|&&d| d <= threshold) {
        return Err(Error::NotPositiveDefinite {
            eigval: bad,
            threshold,
        });
    }
    Ok(finish(eigvals, eigvecs, 0))
}

/// Eigendecomposition of a positive semidefinite matrix with exact null
/// directions.
///
/// Eigenvalues with `|d| ≤ 1e-12 · max|d|` are recorded as exact zeros;
/// anything more negative is rejected. Needed for Green's functions that
/// vanish on the domain boundary, where training points at the boundary
/// produce zero rows of `G`.
pub fn eigendecompose_semidefinite(m: &SymMatrix) -> Result<GramSpectrum> {
    let (mut eigvals, eigvecs) = jacobi_sorted(m)?;
    let threshold = POSITIVITY_THRESHOLD * max_abs(&eigvals);
    if let Some(&bad) = eigvals.iter().find(|&&d| d < -threshold) {
        return Err(Error::NotPositiveDefinite {
            eigval: bad,
            threshold: -threshold,
        });
    }
    let mut null_dim = 0;
    for d in eigvals.iter_mut() {
        if *d <= threshold {
            *d = 0.0;
            null_dim += 1;
        }
    }
    if null_dim == eigvals.len() {
        return Err(Error::NotPositiveDefinite {
            eigval: 0.0,
            threshold,
        });
    }
    Ok(finish(eigvals, eigvecs, null_dim))
}

/// `z = V y` as a free function.
pub fn rotate(spectrum: &GramSpectrum, y: &[f64]) -> Result<Vec<f64>> {
    spectrum.rotate(y)
}

/// Solves `(cI + G) r = y` by a dense Cholesky factorisation.
pub fn solve_shifted(m: &SymMatrix, c: f64, y: &[f64]) -> Result<Vec<f64>> {
    check_shift(c)?;
    let n = m.dim();
    check_len(n, y.len())?;
    // lower-triangular factor, row-major
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..=j {
            let mut sum = m.get(j, k) + if j == k { c } else { 0.0 };
            for p in 0..k {
                sum -= l[j * n + p] * l[k * n + p];
            }
            if j == k {
                if sum <= 0.0 {
                    return Err(Error::NotPositiveDefinite {
                        eigval: sum,
                        threshold: 0.0,
                    });
                }
                l[j * n + j] = sum.sqrt();
            } else {
                l[j * n + k] = sum / l[k * n + k];
            }
        }
    }
    let mut w = vec![0.0; n];
    for j in 0..n {
        let s: f64 = (0..j).map(|p| l[j * n + p] * w[p]).sum();
        w[j] = (y[j] - s) / l[j * n + j];
    }
    let mut r = vec![0.0; n];
    for j in (0..n).rev() {
        let s: f64 = ((j + 1)..n).map(|p| l[p * n + j] * r[p]).sum();
        r[j] = (w[j] - s) / l[j * n + j];
    }
    Ok(r)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_shift(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "shift c must be positive, got {c}"
        )));
    }
    Ok(())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn finish(eigvals: Vec<f64>, eigvecs: Vec<Vec<f64>>, null_dim: usize) -> GramSpectrum {
    let d_min = eigvals[null_dim];
    let d_max = eigvals[eigvals.len() - 1];
    GramSpectrum {
        cond: (d_max / d_min).max(1.0),
        eigvals,
        eigvecs,
        null_dim,
    }
}

/// Cyclic Jacobi; returns eigenvalues ascending with sign-normalised
/// eigenvector rows.
fn jacobi_sorted(m: &SymMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = m.dim();
    let mut a = m.data.clone();
    // columns of w are eigenvectors while iterating
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 1.0;
    }
    let target = JACOBI_TOLERANCE * m.frobenius_norm();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let wkp = w[k * n + p];
                    let wkq = w[k * n + q];
                    w[k * n + p] = c * wkp - s * wkq;
                    w[k * n + q] = s * wkp + c * wkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a, n) > target {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep Jacobi order
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));

    let eigvals = order.iter().map(|&i| a[i * n + i]).collect();
    let eigvecs = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = (0..n).map(|k| w[k * n + i]).collect();
            if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
                if first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    Ok((eigvals, eigvecs))
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                sum += a[j * n + k] * a[j * n + k];
            }
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_pd(n: usize, seed: u64) -> SymMatrix {
        let mut rng = SplitMix64::new(seed);
        let m: Vec<f64> = (0..n * n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        // MᵀM + I
        SymMatrix::from_fn(n, |j, k| {
            let s: f64 = (0..n).map(|p| m[p * n + j] * m[p * n + k]).sum();
            s + if j == k { 1.0 } else { 0.0 }
        })
        .unwrap()
    }

    fn frob_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    fn orthogonality_defect(s: &GramSpectrum) -> f64 {
        let n = s.dim();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let e = dot(s.eigvec(i), s.eigvec(j)) - if i == j { 1.0 } else { 0.0 };
                sum += e * e;
            }
        }
        sum.sqrt()
    }

    #[test]
    fn identity_spectrum() {
        let s = eigendecompose(&SymMatrix::identity(2).unwrap()).unwrap();
        assert_eq!(s.eigvals(), &[1.0, 1.0]);
        assert!(orthogonality_defect(&s) < 1e-15);
        assert_eq!(s.cond(), 1.0);
    }

    #[test]
    fn diagonal_spectrum_sorted() {
        let s = eigendecompose(&SymMatrix::from_diag(&[3.0, 1.0]).unwrap()).unwrap();
        assert_eq!(s.eigvals(), &[1.0, 3.0]);
        assert_eq!(s.cond(), 3.0);
        assert_eq!(s.eigvec(0), &[0.0, 1.0]);
        assert_eq!(s.eigvec(1), &[1.0, 0.0]);
    }

    #[test]
    fn random_pd_reconstructs() {
        let a = random_pd(5, 7);
        let s = eigendecompose(&a).unwrap();
        assert!(frob_diff(&s.reconstruct(), &a) <= 1e-10 * a.frobenius_norm());
        assert!(orthogonality_defect(&s) <= 1e-10);
        assert!(s.eigvals().windows(2).all(|w| w[0] <= w[1]));
        assert!(s.cond() >= 1.0);
        for i in 0..5 {
            let first = s.eigvec(i).iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn singular_is_rejected_then_accepted_as_semidefinite() {
        let m = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            eigendecompose(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let s = eigendecompose_semidefinite(&m).unwrap();
        assert_eq!(s.null_dim(), 1);
        assert_eq!(s.eigvals()[0], 0.0);
        assert!((s.eigvals()[1] - 2.0).abs() < 1e-14);
        assert_eq!(s.d_min(), s.d_max());
    }

    #[test]
    fn indefinite_is_rejected_even_as_semidefinite() {
        let m = SymMatrix::from_diag(&[1.0, -1.0]).unwrap();
        assert!(eigendecompose_semidefinite(&m).is_err());
        let z = SymMatrix::from_diag(&[0.0, 0.0]).unwrap();
        assert!(eigendecompose_semidefinite(&z).is_err());
    }

    #[test]
    fn symmetrizes_on_construction() {
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![4.0, 1.0]]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert!(SymMatrix::new(0, vec![]).is_err());
        assert!(SymMatrix::new(2, vec![1.0]).is_err());
    }

    #[test]
    fn rotate_identity_and_zero() {
        let s = eigendecompose(&SymMatrix::identity(2).unwrap()).unwrap();
        assert_eq!(s.rotate(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let s = eigendecompose(&random_pd(4, 3)).unwrap();
        assert_eq!(s.rotate(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            s.rotate(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 4,
                got: 1
            })
        ));
    }

    #[test]
    fn rotate_preserves_norm() {
        let s = eigendecompose(&random_pd(3, 11)).unwrap();
        let y = [0.3, -1.7, 2.2];
        let z = rotate(&s, &y).unwrap();
        assert!((norm(&z) - norm(&y)).abs() <= 1e-12 * norm(&y));
        let back = s.unrotate(&z).unwrap();
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_solve_small_cases() {
        let close = |r: Vec<f64>| r.iter().all(|v| (v - 1.0).abs() < 1e-15);
        assert!(close(
            solve_shifted(&SymMatrix::identity(2).unwrap(), 1.0, &[2.0, 2.0]).unwrap()
        ));
        assert!(close(
            solve_shifted(
                &SymMatrix::from_diag(&[1.0, 3.0]).unwrap(),
                1.0,
                &[2.0, 4.0]
            )
            .unwrap()
        ));
        assert!(solve_shifted(&SymMatrix::identity(2).unwrap(), 0.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn shifted_solve_matches_spectral_route() {
        let m = random_pd(6, 5);
        let s = eigendecompose(&m).unwrap();
        let y = [1.0, -2.0, 0.5, 3.0, -0.25, 0.75];
        let c = 0.37;
        let direct = solve_shifted(&m, c, &y).unwrap();
        let spectral = s.solve_shifted(c, &y).unwrap();
        let scale = norm(&direct);
        for (a, b) in direct.iter().zip(&spectral) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
        // residual ‖(cI+G)r − y‖
        let gr = m.matvec(&direct).unwrap();
        let res: f64 = gr
            .iter()
            .zip(&direct)
            .zip(&y)
            .map(|((g, r), y)| (g + c * r - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res <= 1e-10 * norm(&y));
    }

    #[test]
    fn deterministic_bitwise() {
        let m = random_pd(8, 99);
        assert_eq!(eigendecompose(&m).unwrap(), eigendecompose(&m).unwrap());
    }
}
