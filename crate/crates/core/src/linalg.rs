//! Covariance ellipsoids and the small dense routines built around them.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const EIGEN_EPS: f64 = f64::EPSILON;
const MAX_SWEEPS: usize = 10_000;

/// Thresholds that classify a spectrum. Both ratios are relative to `λ₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumThresholds {
    /// A cloud is degenerate (not full rank) when `λ_d / λ₁` is below this.
    pub degenerate_ratio: f64,
    /// A spectrum is near-degenerate when its relative spectral gap is below this.
    pub near_degenerate_gap: f64,
}

impl Default for SpectrumThresholds {
    fn default() -> Self {
        Self {
            degenerate_ratio: 1e-9,
            near_degenerate_gap: 1e-6,
        }
    }
}

/// The inertia ellipsoid `X·Xᵀ` of a cloud together with its sorted
/// eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEllipsoid {
    pub matrix: DMatrix<f64>,
    /// Non-increasing.
    pub eigenvalues: DVector<f64>,
    /// Column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// `min_i (λ_i − λ_{i+1}) / λ₁`; zero for a zero matrix, one when `d = 1`.
    pub spectral_gap: f64,
}

impl CovarianceEllipsoid {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn is_degenerate(&self, thresholds: &SpectrumThresholds) -> bool {
        let top = self.largest();
        top <= 0.0 || self.smallest() / top < thresholds.degenerate_ratio
    }

    pub fn is_near_degenerate(&self, thresholds: &SpectrumThresholds) -> bool {
        self.spectral_gap < thresholds.near_degenerate_gap
    }
}

/// `X·Xᵀ` of the cloud as given (no centering, no `1/n`), diagonalized.
pub fn covariance(cloud: &PointCloud) -> Result<CovarianceEllipsoid> {
    let x = cloud.matrix();
    let matrix = x * x.transpose();
    let (eigenvalues, eigenvectors) = eigh_sorted(&matrix)?;
    let spectral_gap = spectral_gap(&eigenvalues);
    Ok(CovarianceEllipsoid {
        matrix,
        eigenvalues,
        eigenvectors,
        spectral_gap,
    })
}

/// Relative gap of a non-increasing spectrum.
pub fn spectral_gap(eigenvalues: &DVector<f64>) -> f64 {
    let top = eigenvalues[0];
    if eigenvalues.len() == 1 {
        return if top > 0.0 { 1.0 } else { 0.0 };
    }
    if top <= 0.0 {
        return 0.0;
    }
    eigenvalues
        .as_slice()
        .windows(2)
        .map(|w| (w[0] - w[1]) / top)
        .fold(f64::INFINITY, f64::min)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in non-increasing
/// order.
///
/// Each eigenvector is signed so that its largest-magnitude entry is positive
/// (the lowest row wins a tie), which makes the output a deterministic
/// function of the input bits.
pub fn eigh_sorted(matrix: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = matrix.nrows();
    if d == 0 || matrix.ncols() != d {
        return Err(Error::invalid(format!(
            "eigh_sorted needs a nonempty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let scale = matrix.amax();
    let asymmetry = (matrix - matrix.transpose()).amax();
    if asymmetry > 1e-10 * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max |A − Aᵀ| = {asymmetry:.3e})"
        )));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort: equal eigenvalues keep the solver's order.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        let mut pivot = 0;
        for r in 1..d {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(k, &col);
    }
    Ok((eigenvalues, eigenvectors))
}

/// Largest singular value.
pub fn spectral_norm(matrix: &DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    if matrix.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // Work on the smaller Gram side; singular values are unchanged by transposition.
    let m = if matrix.nrows() > matrix.ncols() {
        matrix.transpose()
    } else {
        matrix.clone()
    };
    match SVD::try_new(m, false, false, EIGEN_EPS, MAX_SWEEPS) {
        Some(svd) => svd.singular_values.max(),
        None => power_iteration_norm(matrix),
    }
}

/// Fallback for the rare SVD non-convergence: power iteration on `MᵀM`.
fn power_iteration_norm(matrix: &DMatrix<f64>) -> f64 {
    let gram = matrix.transpose() * matrix;
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut value = 0.0;
    for _ in 0..10_000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let converged = (norm - value).abs() <= 1e-15 * norm;
        value = norm;
        v = next;
        if converged {
            break;
        }
    }
    value.sqrt()
}

/// Root of the sum of squared entries.
pub fn frobenius_norm(matrix: &DMatrix<f64>) -> f64 {
    matrix.norm()
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn relative_frobenius_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = frobenius_norm(b);
    let num = frobenius_norm(&(a - b));
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}
