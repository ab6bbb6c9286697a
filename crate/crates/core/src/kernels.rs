//! Green's functions and Gram-matrix construction.
//!
//! Both the Gram matrix and kernel vectors carry the `1/K` factor that comes
//! from averaging the squared loss over the K training points:
//! `G[j,k] = g(x_j, x_k) / K` and `g_x[k] = g(x, x_k) / K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SymMatrix;

/// Coordinates closer than this (in every component) count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Green's function of `d⁴/dx⁴` on [0, 1] with
    /// `f(0) = f(1) = f''(0) = f''(1) = 0`; scalar inputs only.
    CubicSplineGreen,
    /// `exp(-‖x - x'‖² / (2 σ²))` on inputs of any dimension.
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::CubicSplineGreen => Ok(()),
            KernelSpec::Gaussian { bandwidth } if bandwidth > 0.0 && bandwidth.is_finite() => {
                Ok(())
            }
            KernelSpec::Gaussian { bandwidth } => Err(Error::InvalidInput(format!(
                "Gaussian bandwidth must be positive, got {bandwidth}"
            ))),
        }
    }

    /// Checks that `x` lies in the kernel's domain.
    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainViolation {
                value: x.to_vec(),
                reason: "inputs must be non-empty and finite",
            });
        }
        if let KernelSpec::CubicSplineGreen = self {
            if x.len() != 1 {
                return Err(Error::DomainViolation {
                    value: x.to_vec(),
                    reason: "cubic spline Green's function takes scalar inputs",
                });
            }
            if !(0.0..=1.0).contains(&x[0]) {
                return Err(Error::DomainViolation {
                    value: x.to_vec(),
                    reason: "cubic spline Green's function is defined on [0, 1]",
                });
            }
        }
        Ok(())
    }
}

/// Evaluates `g(x, x†)`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], x_dag: &[f64]) -> Result<f64> {
    spec.validate()?;
    spec.check_input(x)?;
    spec.check_input(x_dag)?;
    match *spec {
        KernelSpec::CubicSplineGreen => Ok(cubic_spline_green(x[0], x_dag[0])),
        KernelSpec::Gaussian { bandwidth } => {
            if x.len() != x_dag.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    got: x_dag.len(),
                });
            }
            let sq: f64 = x.iter().zip(x_dag).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((-sq / (2.0 * bandwidth * bandwidth)).exp())
        }
    }
}

/// `(1/6) max((x − x†)³, 0) − (1/6) x (1 − x†)(x² − 2x† + x†²)`, evaluated in
/// the equivalent split form `lo (1 − hi)(2 hi − hi² − lo²) / 6` with
/// `lo = min(x, x†)`, `hi = max(x, x†)`. The split form is symmetric by
/// construction and vanishes exactly on the boundary.
fn cubic_spline_green(x: f64, xd: f64) -> f64 {
    let (lo, hi) = if x <= xd { (x, xd) } else { (xd, x) };
    lo * (1.0 - hi) * (2.0 * hi - hi * hi - lo * lo) / 6.0
}

/// Training inputs and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        validate_points(&points)?;
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("labels must be finite".into()));
        }
        Ok(Dataset { points, labels })
    }

    /// Dataset with scalar inputs.
    pub fn scalar(xs: &[f64], labels: Vec<f64>) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn input_dim(&self) -> usize {
        self.points[0].len()
    }

    /// Same inputs, new labels.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), labels)
    }
}

/// Validates a set of training inputs: non-empty, consistent dimension,
/// pairwise distinct.
pub fn validate_points(points: &[Vec<f64>]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "dataset must contain at least one point".into(),
        ));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::InvalidInput(
            "points must have at least one coordinate".into(),
        ));
    }
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("points must be finite".into()));
        }
    }
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate().skip(i + 1) {
            if p.iter()
                .zip(q)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE)
            {
                return Err(Error::InvalidInput(format!(
                    "duplicate training points at indices {i} and {j}"
                )));
            }
        }
    }
    Ok(())
}

/// `G[j,k] = g(x_j, x_k) / K`.
pub fn build_gram(spec: &KernelSpec, data: &Dataset) -> Result<SymMatrix> {
    gram_from_points(spec, data.points())
}

pub fn gram_from_points(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<SymMatrix> {
    let k = points.len();
    let scale = 1.0 / k as f64;
    let mut raw = Vec::with_capacity(k * k);
    for xj in points {
        for xk in points {
            raw.push(eval_kernel(spec, xj, xk)? * scale);
        }
    }
    SymMatrix::new(k, raw)
}

/// `g_x[k] = g(x, x_k) / K`.
pub fn kernel_vector(spec: &KernelSpec, data: &Dataset, x: &[f64]) -> Result<Vec<f64>> {
    kernel_vector_from_points(spec, data.points(), x)
}

pub fn kernel_vector_from_points(
    spec: &KernelSpec,
    points: &[Vec<f64>],
    x: &[f64],
) -> Result<Vec<f64>> {
    let scale = 1.0 / points.len() as f64;
    points
        .iter()
        .map(|xk| eval_kernel(spec, x, xk).map(|g| g * scale))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{eigendecompose, eigendecompose_semidefinite};

    const SPLINE: KernelSpec = KernelSpec::CubicSplineGreen;

    fn grid(k: usize) -> Vec<f64> {
        (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
    }

    #[test]
    fn spline_boundaries_vanish() {
        assert_eq!(eval_kernel(&SPLINE, &[1.0], &[0.3]).unwrap(), 0.0);
        assert_eq!(eval_kernel(&SPLINE, &[0.0], &[0.7]).unwrap(), 0.0);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            for b in [0.0, 1.0] {
                assert_eq!(eval_kernel(&SPLINE, &[b], &[t]).unwrap(), 0.0);
                assert_eq!(eval_kernel(&SPLINE, &[t], &[b]).unwrap(), 0.0);
            }
        }
    }

    fn literal_closed_form(x: f64, xd: f64) -> f64 {
        (x - xd).max(0.0).powi(3) / 6.0 - x * (1.0 - xd) * (x * x - 2.0 * xd + xd * xd) / 6.0
    }

    #[test]
    fn split_form_matches_literal_closed_form() {
        for i in 0..=40 {
            for j in 0..=40 {
                let (x, xd) = (i as f64 / 40.0, j as f64 / 40.0);
                let g = eval_kernel(&SPLINE, &[x], &[xd]).unwrap();
                assert!((g - literal_closed_form(x, xd)).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn spline_value_and_swap() {
        // (1/6)(0.25)³ + (1/6)(0.5)(0.75)(0.1875) = 0.015625/6 + 0.0703125/6
        let expected = (0.015625 + 0.0703125) / 6.0;
        let a = eval_kernel(&SPLINE, &[0.5], &[0.25]).unwrap();
        let b = eval_kernel(&SPLINE, &[0.25], &[0.5]).unwrap();
        assert!((a - expected).abs() < 1e-15);
        assert!((a - 0.0143229).abs() < 1e-7);
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn spline_domain_violation() {
        assert!(matches!(
            eval_kernel(&SPLINE, &[1.5], &[0.3]),
            Err(Error::DomainViolation { .. })
        ));
        assert!(eval_kernel(&SPLINE, &[0.5, 0.5], &[0.3]).is_err());
    }

    #[test]
    fn gaussian_rejects_bad_bandwidth() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(0.5).is_ok());
    }

    #[test]
    fn gram_single_gaussian_point() {
        let data = Dataset::scalar(&[0.0], vec![1.0]).unwrap();
        let g = build_gram(&KernelSpec::gaussian(1.0).unwrap(), &data).unwrap();
        assert_eq!(g.dim(), 1);
        assert_eq!(g.get(0, 0), 1.0);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let data = Dataset::new(vec![vec![0.1, 0.2], vec![-0.4, 0.9]], vec![1.0, 2.0]).unwrap();
        let g = build_gram(&KernelSpec::gaussian(0.7).unwrap(), &data).unwrap();
        assert_eq!(g.get(0, 1), g.get(1, 0));
    }

    #[test]
    fn interior_spline_gram_is_pd() {
        let xs: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let data = Dataset::scalar(&xs, vec![0.0; 9]).unwrap();
        let g = build_gram(&SPLINE, &data).unwrap();
        let s = eigendecompose(&g).unwrap();
        assert!(s.eigvals()[0] > 0.0);
    }

    #[test]
    fn boundary_grid_spline_gram_has_two_null_directions() {
        // the 11-point grid on [0, 1] includes both endpoints, where g vanishes
        let data = Dataset::scalar(&grid(11), vec![0.0; 11]).unwrap();
        let g = build_gram(&SPLINE, &data).unwrap();
        for k in 0..11 {
            assert_eq!(g.get(0, k), 0.0);
            assert_eq!(g.get(10, k), 0.0);
        }
        assert!(matches!(
            eigendecompose(&g),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let s = eigendecompose_semidefinite(&g).unwrap();
        assert_eq!(s.null_dim(), 2);
        assert_eq!(s.rank(), 9);
    }

    #[test]
    fn kernel_vector_matches_gram_diagonal() {
        let xs = grid(11);
        let data = Dataset::scalar(&xs, vec![0.0; 11]).unwrap();
        let g = build_gram(&SPLINE, &data).unwrap();
        for (j, &x) in xs.iter().enumerate() {
            let gx = kernel_vector(&SPLINE, &data, &[x]).unwrap();
            assert_eq!(gx[j], g.get(j, j));
        }
        let gx = kernel_vector(&SPLINE, &data, &[1.0]).unwrap();
        assert!(gx.iter().all(|&v| v == 0.0));
        let x = 0.437;
        let gx = kernel_vector(&SPLINE, &data, &[x]).unwrap();
        for (k, &xk) in xs.iter().enumerate() {
            let direct = eval_kernel(&SPLINE, &[x], &[xk]).unwrap() * (1.0 / 11.0);
            assert_eq!(gx[k], direct);
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Dataset::scalar(&[0.1, 0.2, 0.1 + 1e-13], vec![0.0; 3]).is_err());
        assert!(Dataset::scalar(&[0.1, 0.2], vec![0.0]).is_err());
        assert!(Dataset::scalar(&[], vec![]).is_err());
    }

    #[test]
    fn kernel_spec_json_shape() {
        let s = serde_json::to_string(&KernelSpec::Gaussian { bandwidth: 0.5 }).unwrap();
        assert_eq!(s, r#"{"type":"gaussian","bandwidth":0.5}"#);
        let k: KernelSpec = serde_json::from_str(r#"{"type":"cubic_spline_green"}"#).unwrap();
        assert_eq!(k, KernelSpec::CubicSplineGreen);
    }
}
