//! Point clouds, rigid motions and correspondence maps.
//!
//! A cloud is stored as a `d × n` matrix whose columns are the points, so a
//! rigid motion acts by left multiplication and a relabelling of the points
//! acts on the columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A finite set of points in `R^d`, one point per column.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: DMatrix<f64>,
}

impl PointCloud {
    /// Wraps a `d × n` matrix. Rejects empty matrices and non-finite entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid(format!(
                "point cloud must be nonempty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        Ok(Self { data })
    }

    /// Builds a cloud from a list of points, each of length `d`.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::invalid("point cloud must be nonempty"));
        };
        let d = first.as_ref().len();
        let mut flat = Vec::with_capacity(d * points.len());
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != d {
                return Err(Error::invalid(format!(
                    "point {i} has {} coordinates, expected {d}",
                    p.len()
                )));
            }
            flat.extend_from_slice(p);
        }
        Self::new(DMatrix::from_column_slice(d, points.len(), &flat))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.as_slice().chunks_exact(self.dim())
    }

    /// Largest absolute coordinate.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Columns `indices[k]` gathered in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "column {bad} out of range for {n} points"
            )));
        }
        Self::new(self.data.select_columns(indices))
    }

    /// Appends the columns of `other`.
    pub fn concat(&self, other: &PointCloud) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut flat = Vec::with_capacity(self.data.len() + other.data.len());
        flat.extend_from_slice(self.data.as_slice());
        flat.extend_from_slice(other.data.as_slice());
        Self::new(DMatrix::from_column_slice(
            self.dim(),
            self.len() + other.len(),
            &flat,
        ))
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.data * factor)
    }
}

/// `x ↦ R·x + t` with `R ∈ O(d)`; reflections are permitted.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

/// Maximum entry of `|RᵀR − I|` tolerated by [`RigidMotion::new`].
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

impl RigidMotion {
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = rotation.nrows();
        if rotation.ncols() != d || translation.len() != d || d == 0 {
            return Err(Error::invalid(format!(
                "rotation {}x{} incompatible with translation of length {}",
                rotation.nrows(),
                rotation.ncols(),
                translation.len()
            )));
        }
        let residual = orthogonality_residual(&rotation);
        if residual > ORTHOGONALITY_TOLERANCE {
            return Err(Error::invalid(format!(
                "rotation is not orthogonal (max |RᵀR − I| = {residual:.3e})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            rotation: DMatrix::identity(d, d),
            translation: DVector::zeros(d),
        }
    }

    pub fn from_rotation(rotation: DMatrix<f64>) -> Result<Self> {
        let d = rotation.nrows();
        Self::new(rotation, DVector::zeros(d))
    }

    pub fn dim(&self) -> usize {
        self.rotation.nrows()
    }

    /// `x ↦ Rᵀ(x − t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let translation = -(&rt * &self.translation);
        Self {
            rotation: rt,
            translation,
        }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidMotion) -> Self {
        Self {
            rotation: &self.rotation * &first.rotation,
            translation: &self.rotation * &first.translation + &self.translation,
        }
    }

    pub fn apply_point(&self, x: &[f64]) -> DVector<f64> {
        &self.rotation * DVector::from_column_slice(x) + &self.translation
    }
}

/// Maximum absolute entry of `RᵀR − I`.
pub fn orthogonality_residual(rotation: &DMatrix<f64>) -> f64 {
    let d = rotation.nrows();
    let gram = rotation.transpose() * rotation;
    (gram - DMatrix::<f64>::identity(d, d)).amax()
}

/// Maps every source column index to a target column index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMap {
    pub assignment: Vec<usize>,
    /// True only when `assignment` is a permutation of `0..n`.
    pub bijective: bool,
}

impl PermutationMap {
    /// A bijection; fails unless `assignment` is a permutation of `0..n`.
    pub fn permutation(assignment: Vec<usize>) -> Result<Self> {
        if !is_permutation(&assignment) {
            return Err(Error::invalid("assignment is not a permutation"));
        }
        Ok(Self {
            assignment,
            bijective: true,
        })
    }

    /// A correspondence map from nearest-neighbour matching. The bijective
    /// flag is set when the map happens to be a permutation.
    pub fn matching(assignment: Vec<usize>) -> Self {
        let bijective = is_permutation(&assignment);
        Self {
            assignment,
            bijective,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            bijective: true,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Inverse of a bijection.
    pub fn inverse(&self) -> Option<Self> {
        if !self.bijective {
            return None;
        }
        let mut inv = vec![0; self.assignment.len()];
        for (i, &j) in self.assignment.iter().enumerate() {
            inv[j] = i;
        }
        Some(Self {
            assignment: inv,
            bijective: true,
        })
    }

    /// Number of source indices on which the two maps disagree.
    pub fn disagreements(&self, other: &PermutationMap) -> usize {
        self.assignment
            .iter()
            .zip(&other.assignment)
            .filter(|(a, b)| a != b)
            .count()
    }
}

fn is_permutation(assignment: &[usize]) -> bool {
    let n = assignment.len();
    let mut seen = vec![false; n];
    for &j in assignment {
        if j >= n || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

/// `(1/n)·Σ xᵢ`.
pub fn barycenter(cloud: &PointCloud) -> DVector<f64> {
    let n = cloud.len() as f64;
    cloud.matrix().column_sum() / n
}

/// Translates the cloud so its barycenter is the origin. Returns the centered
/// cloud and the removed offset.
pub fn center(cloud: &PointCloud) -> (PointCloud, DVector<f64>) {
    let b = barycenter(cloud);
    let mut data = cloud.matrix().clone();
    for mut col in data.column_iter_mut() {
        col -= &b;
    }
    (PointCloud { data }, b)
}

/// Applies `x ↦ R·x + t` to every column.
pub fn apply_motion(motion: &RigidMotion, cloud: &PointCloud) -> Result<PointCloud> {
    if motion.dim() != cloud.dim() {
        return Err(Error::invalid(format!(
            "motion of dimension {} applied to cloud of dimension {}",
            motion.dim(),
            cloud.dim()
        )));
    }
    let mut data = &motion.rotation * cloud.matrix();
    for mut col in data.column_iter_mut() {
        col += &motion.translation;
    }
    PointCloud::new(data)
}

/// Reorders columns so that output column `assignment[i]` is input column `i`.
pub fn permute_columns(cloud: &PointCloud, map: &PermutationMap) -> Result<PointCloud> {
    if !map.bijective || map.len() != cloud.len() {
        return Err(Error::invalid(
            "column permutation requires a bijection of matching length",
        ));
    }
    let d = cloud.dim();
    let mut data = DMatrix::zeros(d, cloud.len());
    for (i, &j) in map.assignment.iter().enumerate() {
        data.set_column(j, &cloud.matrix().column(i));
    }
    PointCloud::new(data)
}
