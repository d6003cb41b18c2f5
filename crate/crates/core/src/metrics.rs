//! Trial statistics and the success criterion.
//!
//! All distances are spectral norms of `d × n` difference matrices divided by
//! `‖P‖₂`. When the corrupted target has extra columns (occlusion), the
//! distances to it are taken over the matched pairs only, and the corruption
//! level `ν` compares `Q′` against `Q` padded with zero columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cloud::{apply_motion, center, PointCloud, RigidMotion};
use crate::error::{Error, Result};
use crate::icp::RegistrationResult;
use crate::linalg::{covariance, frobenius_norm, spectral_norm, SpectrumThresholds};
use crate::perturb::SceneTruth;

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub e_init_seconds: f64,
    pub icp_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Normalized corruption `‖Q′ − Q‖₂ / ‖P‖₂`.
    pub nu: f64,
    /// Normalized distance of the recovered image to the corrupted target.
    pub delta: f64,
    /// Normalized distance of the recovered image to the clean target.
    pub delta_spec: f64,
    /// `‖U_icp − O‖₂`.
    pub delta_o: f64,
    /// Fraction of source points matched to the wrong target column.
    pub delta_h: Option<f64>,
    /// Reduction of the normalized distance to `Q′` achieved by ICP.
    pub delta_icp: f64,
    /// `‖U_init − U_icp‖₂`.
    pub delta_icp_o: f64,
    pub success: bool,
    #[serde(skip)]
    pub timing: StageTiming,
}

/// Columns `target[assignment[i]] − moved[i]` as a `d × n` matrix.
fn matched_residual(
    target: &PointCloud,
    assignment: &[usize],
    moved: &PointCloud,
) -> Result<DMatrix<f64>> {
    let picked = target.select(assignment)?;
    Ok(picked.matrix() - moved.matrix())
}

fn padded_difference(corrupted: &PointCloud, clean: &PointCloud) -> DMatrix<f64> {
    let mut diff = corrupted.matrix().clone();
    let n = clean.len().min(corrupted.len());
    let mut head = diff.columns_mut(0, n);
    head -= clean.matrix().columns(0, n);
    diff
}

pub fn evaluate(
    truth: &SceneTruth,
    result: &RegistrationResult,
    threshold: f64,
) -> Result<TrialRecord> {
    let p = &truth.source;
    let d = p.dim();
    if truth.corrupted_target.dim() != d || result.final_motion().dim() != d {
        return Err(Error::invalid(
            "scene and registration result dimensions differ",
        ));
    }
    let correspondences = &result.icp.correspondences.assignment;
    if correspondences.len() != p.len() || truth.permutation.len() != p.len() {
        return Err(Error::invalid(
            "correspondence map does not cover the source",
        ));
    }
    let p_norm = spectral_norm(p.matrix());
    if p_norm == 0.0 {
        return Err(Error::DegenerateCloud(
            "source has zero spectral norm".into(),
        ));
    }

    let final_motion = result.final_motion();
    let moved = apply_motion(final_motion, p)?;
    let moved_init = apply_motion(&result.initial_motion, p)?;

    let nu = spectral_norm(&padded_difference(
        &truth.corrupted_target,
        &truth.clean_target,
    )) / p_norm;
    let to_corrupted = spectral_norm(&matched_residual(
        &truth.corrupted_target,
        correspondences,
        &moved,
    )?);
    let init_to_corrupted = spectral_norm(&matched_residual(
        &truth.corrupted_target,
        correspondences,
        &moved_init,
    )?);
    let delta = to_corrupted / p_norm;
    let delta_spec = spectral_norm(&matched_residual(
        &truth.clean_target,
        &truth.permutation.assignment,
        &moved,
    )?) / p_norm;
    let delta_o = spectral_norm(&(&final_motion.rotation - &truth.rotation));
    let delta_h =
        Some(result.icp.correspondences.disagreements(&truth.permutation) as f64 / p.len() as f64);
    let delta_icp = (init_to_corrupted - to_corrupted) / p_norm;
    let delta_icp_o = spectral_norm(&(&result.initial_motion.rotation - &final_motion.rotation));

    Ok(TrialRecord {
        nu,
        delta,
        delta_spec,
        delta_o,
        delta_h,
        delta_icp,
        delta_icp_o,
        success: delta_spec <= threshold,
        timing: StageTiming::default(),
    })
}

/// Fraction of successful trials.
pub fn success_rate(records: &[TrialRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("success rate of an empty batch"));
    }
    Ok(records.iter().filter(|r| r.success).count() as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidDeviation {
    /// `‖E(Q′) − E(Q)‖₂ / ‖E(Q)‖₂`.
    pub spectral: f64,
    /// `‖E(Q′) − E(Q)‖_F / ‖E(Q)‖_F`.
    pub frobenius: f64,
}

/// Relative deviation between the centered ellipsoids of a reference cloud and
/// a corrupted copy.
pub fn ellipsoid_deviation(
    reference: &PointCloud,
    corrupted: &PointCloud,
) -> Result<EllipsoidDeviation> {
    if reference.dim() != corrupted.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let e = covariance(&center(reference).0)?;
    if e.is_degenerate(&SpectrumThresholds::default()) {
        return Err(Error::DegenerateCloud(
            "reference ellipsoid is degenerate".into(),
        ));
    }
    let e_prime = covariance(&center(corrupted).0)?;
    let diff = &e_prime.matrix - &e.matrix;
    Ok(EllipsoidDeviation {
        spectral: spectral_norm(&diff) / spectral_norm(&e.matrix),
        frobenius: frobenius_norm(&diff) / frobenius_norm(&e.matrix),
    })
}

/// Distance between two orthogonal parts, `‖A − B‖₂`.
pub fn rotation_distance(a: &RigidMotion, b: &RigidMotion) -> f64 {
    spectral_norm(&(&a.rotation - &b.rotation))
}
