//! Ellipsoid initialization.
//!
//! Both clouds are centered and their inertia ellipsoids diagonalized. The
//! principal frames are aligned and the finite ambiguity left by the
//! diagonalization is resolved by scoring every element of a small group of
//! signed permutations with the nearest-neighbour Match score.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{apply_motion, center, PointCloud, RigidMotion};
use crate::error::{Error, Result};
use crate::group::{enumerate_group, GroupKind, SignedPermutation};
use crate::linalg::{covariance, CovarianceEllipsoid, SpectrumThresholds};
use crate::spatial::{match_against, symmetric_match_score, NeighborIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct EInitParams {
    pub group: GroupKind,
    pub thresholds: SpectrumThresholds,
    /// Relative eigenvalue discrepancy above which the clouds are flagged as
    /// likely unrelated.
    pub eigenvalue_mismatch: f64,
    /// Score candidates on at most this many target points (evenly strided).
    pub max_scoring_points: Option<usize>,
    /// Score with the two-sided Match instead of target → source only.
    pub symmetric_match: bool,
    /// Candidates within `tie_tolerance · scale` of the best score count as tied.
    pub tie_tolerance: f64,
}

impl Default for EInitParams {
    fn default() -> Self {
        Self {
            group: GroupKind::Ref,
            thresholds: SpectrumThresholds::default(),
            eigenvalue_mismatch: 0.2,
            max_scoring_points: None,
            symmetric_match: false,
            tie_tolerance: 1e-9,
        }
    }
}

impl EInitParams {
    pub fn with_group(group: GroupKind) -> Self {
        Self {
            group,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EInitWarning {
    /// Eigenvalues too close for the principal axes to be trusted.
    NearDegenerateSpectrum {
        source_gap: f64,
        target_gap: f64,
        suggest_bd: bool,
    },
    /// The two ellipsoids have noticeably different spectra.
    EigenvalueMismatch { discrepancy: f64 },
    /// Several candidates share the best score (symmetric cloud).
    TiedCandidates { count: usize },
}

impl fmt::Display for EInitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EInitWarning::NearDegenerateSpectrum {
                source_gap,
                target_gap,
                suggest_bd,
            } => {
                write!(
                    f,
                    "near-degenerate spectrum (gaps {source_gap:.3e} / {target_gap:.3e})"
                )?;
                if *suggest_bd {
                    f.write_str("; consider the B_d group")?;
                }
                Ok(())
            }
            EInitWarning::EigenvalueMismatch { discrepancy } => write!(
                f,
                "eigenvalue mismatch {discrepancy:.3}; clouds may be unrelated or heavily corrupted"
            ),
            EInitWarning::TiedCandidates { count } => {
                write!(
                    f,
                    "{count} candidates tie for the best score; cloud is likely symmetric"
                )
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EInitResult {
    /// Maps the source frame onto the target frame.
    pub motion: RigidMotion,
    pub chosen_element: SignedPermutation,
    pub chosen_index: usize,
    /// Every group element with its Match score, in enumeration order.
    pub candidate_scores: Vec<(SignedPermutation, f64)>,
    /// (source, target) relative spectral gaps.
    pub spectral_gaps: (f64, f64),
    pub source_ellipsoid: CovarianceEllipsoid,
    pub target_ellipsoid: CovarianceEllipsoid,
    pub warnings: Vec<EInitWarning>,
}

impl EInitResult {
    pub fn best_score(&self) -> f64 {
        self.candidate_scores[self.chosen_index].1
    }
}

/// Eigen-structure diagnostics for a pair of clouds, computed on centered copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub source_eigenvalues: Vec<f64>,
    pub target_eigenvalues: Vec<f64>,
    pub source_gap: f64,
    pub target_gap: f64,
    /// `max_i |λᵢ(P) − λᵢ(Q)| / λ₁(P)`.
    pub eigenvalue_discrepancy: f64,
}

pub fn spectrum_report(source: &PointCloud, target: &PointCloud) -> Result<SpectrumReport> {
    if source.dim() != target.dim() {
        return Err(Error::invalid("source and target dimensions differ"));
    }
    let ep = covariance(&center(source).0)?;
    let eq = covariance(&center(target).0)?;
    Ok(report_from(&ep, &eq))
}

fn report_from(ep: &CovarianceEllipsoid, eq: &CovarianceEllipsoid) -> SpectrumReport {
    SpectrumReport {
        source_eigenvalues: ep.eigenvalues.iter().copied().collect(),
        target_eigenvalues: eq.eigenvalues.iter().copied().collect(),
        source_gap: ep.spectral_gap,
        target_gap: eq.spectral_gap,
        eigenvalue_discrepancy: eigenvalue_discrepancy(ep, eq),
    }
}

fn eigenvalue_discrepancy(ep: &CovarianceEllipsoid, eq: &CovarianceEllipsoid) -> f64 {
    let top = ep.largest();
    let worst = ep
        .eigenvalues
        .iter()
        .zip(eq.eigenvalues.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if top > 0.0 {
        worst / top
    } else {
        worst
    }
}

fn check_registrable(cloud: &PointCloud, name: &str) -> Result<()> {
    let d = cloud.dim();
    if cloud.len() < d + 1 {
        return Err(Error::DegenerateCloud(format!(
            "{name} has {} points, need at least {}",
            cloud.len(),
            d + 1
        )));
    }
    Ok(())
}

/// Initial rigid motion carrying `source` onto `target`.
pub fn e_init(
    source: &PointCloud,
    target: &PointCloud,
    params: &EInitParams,
) -> Result<EInitResult> {
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: source {d} vs target {}",
            target.dim()
        )));
    }
    check_registrable(source, "source")?;
    check_registrable(target, "target")?;
    let group = enumerate_group(d, params.group)?;

    let (p, bp) = center(source);
    let (q, bq) = center(target);
    let ep = covariance(&p)?;
    let eq = covariance(&q)?;
    for (e, name) in [(&ep, "source"), (&eq, "target")] {
        if e.is_degenerate(&params.thresholds) {
            return Err(Error::DegenerateCloud(format!(
                "{name} is not full rank (λ_min/λ_max = {:.3e})",
                if e.largest() > 0.0 {
                    e.smallest() / e.largest()
                } else {
                    0.0
                }
            )));
        }
    }

    let mut warnings = Vec::new();
    if ep.is_near_degenerate(&params.thresholds) || eq.is_near_degenerate(&params.thresholds) {
        warnings.push(EInitWarning::NearDegenerateSpectrum {
            source_gap: ep.spectral_gap,
            target_gap: eq.spectral_gap,
            suggest_bd: params.group == GroupKind::Ref,
        });
    }
    let discrepancy = eigenvalue_discrepancy(&ep, &eq);
    if discrepancy > params.eigenvalue_mismatch {
        warnings.push(EInitWarning::EigenvalueMismatch { discrepancy });
    }

    let up = &ep.eigenvectors;
    let uq = &eq.eigenvectors;
    let u0 = uq * up.transpose();
    let candidate = |w: &DMatrix<f64>| -> DMatrix<f64> { &u0 * up * w * up.transpose() };

    let scoring_target = match params.max_scoring_points {
        Some(m) if m > 0 && m < q.len() => {
            let idx: Vec<usize> = (0..m).map(|k| k * q.len() / m).collect();
            q.select(&idx)?
        }
        _ => q.clone(),
    };
    let index = NeighborIndex::build(&p);
    let matrices = group.matrices();
    let scores: Vec<f64> = matrices
        .par_iter()
        .map(|w| -> Result<f64> {
            let r = candidate(w);
            let pulled_back = PointCloud::new(r.transpose() * scoring_target.matrix())?;
            if params.symmetric_match {
                symmetric_match_score(&pulled_back, &p)
            } else {
                Ok(match_against(&pulled_back, &index)?.score)
            }
        })
        .collect::<Result<_>>()?;

    // First minimum in enumeration order, independent of the parallel schedule.
    let mut chosen_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[chosen_index] {
            chosen_index = i;
        }
    }
    let best = scores[chosen_index];
    let scale = (ep.matrix.trace() / p.len() as f64).sqrt();
    let ties = scores
        .iter()
        .filter(|&&s| s - best <= params.tie_tolerance * scale)
        .count();
    if ties > 1 {
        warnings.push(EInitWarning::TiedCandidates { count: ties });
    }

    let rotation = candidate(&matrices[chosen_index]);
    let translation: DVector<f64> = &bq - &rotation * &bp;
    let motion = RigidMotion::new(rotation, translation)?;
    let candidate_scores = group.elements.iter().cloned().zip(scores).collect();

    Ok(EInitResult {
        motion,
        chosen_element: group.elements[chosen_index].clone(),
        chosen_index,
        candidate_scores,
        spectral_gaps: (ep.spectral_gap, eq.spectral_gap),
        source_ellipsoid: ep,
        target_ellipsoid: eq,
        warnings,
    })
}

/// The target expressed in the centered source frame, `Uᵀ·(Q − b(Q))`, as the
/// last step of the initializer leaves it.
pub fn pull_back_target(result: &EInitResult, target: &PointCloud) -> Result<PointCloud> {
    let (q, _) = center(target);
    let undo = RigidMotion::from_rotation(result.motion.rotation.transpose())?;
    apply_motion(&undo, &q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asymmetric_cloud() -> PointCloud {
        PointCloud::from_points(&[
            [0.0, 0.0, 0.0],
            [4.0, 0.2, -0.3],
            [0.5, 2.1, 0.4],
            [-0.7, 0.3, 1.3],
            [1.9, 1.1, -0.2],
            [-2.3, -0.4, 0.1],
            [0.9, -1.6, 0.8],
        ])
        .unwrap()
    }

    #[test]
    fn identity_pair_recovers_identity() {
        let x = asymmetric_cloud();
        let r = e_init(&x, &x, &EInitParams::default()).unwrap();
        assert!(r.chosen_element.is_identity());
        assert!((&r.motion.rotation - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!(r.motion.translation.amax() < 1e-12);
        assert!(r.best_score() < 1e-12);
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    }

    #[test]
    fn cube_vertices_tie_all_candidates() {
        let mut pts = Vec::new();
        for mask in 0..8 {
            pts.push([
                if mask & 1 == 0 { -1.0 } else { 1.0 },
                if mask & 2 == 0 { -1.0 } else { 1.0 },
                if mask & 4 == 0 { -1.0 } else { 1.0 },
            ]);
        }
        let cube = PointCloud::from_points(&pts).unwrap();
        let r = e_init(&cube, &cube, &EInitParams::default()).unwrap();
        let first = r.candidate_scores[0].1;
        assert!(r
            .candidate_scores
            .iter()
            .all(|(_, s)| (s - first).abs() < 1e-12));
        assert!(r.warnings.iter().any(|w| matches!(
            w,
            EInitWarning::NearDegenerateSpectrum {
                suggest_bd: true,
                ..
            }
        )));
        assert!(r
            .warnings
            .iter()
            .any(|w| matches!(w, EInitWarning::TiedCandidates { count: 8 })));
        assert_eq!(r.chosen_index, 0);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let flat = PointCloud::from_points(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            e_init(&flat, &flat, &EInitParams::default()),
            Err(Error::DegenerateCloud(_))
        ));
        let few = PointCloud::from_points(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            e_init(&few, &few, &EInitParams::default()),
            Err(Error::DegenerateCloud(_))
        ));
        let two_d = PointCloud::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]]).unwrap();
        assert!(matches!(
            e_init(&asymmetric_cloud(), &two_d, &EInitParams::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn eigenvalue_mismatch_is_flagged() {
        let x = asymmetric_cloud();
        let y = x.scaled(2.0).unwrap();
        let r = e_init(&x, &y, &EInitParams::default()).unwrap();
        assert!(r.warnings.iter().any(
            |w| matches!(w, EInitWarning::EigenvalueMismatch { discrepancy } if *discrepancy > 2.9)
        ));
    }

    #[test]
    fn subsampled_scoring_still_finds_identity() {
        let x = asymmetric_cloud();
        let params = EInitParams {
            max_scoring_points: Some(4),
            ..EInitParams::default()
        };
        let r = e_init(&x, &x, &params).unwrap();
        assert!(r.chosen_element.is_identity());
    }

    #[test]
    fn spectrum_report_of_identical_clouds() {
        let x = asymmetric_cloud();
        let rep = spectrum_report(&x, &x).unwrap();
        assert_eq!(rep.eigenvalue_discrepancy, 0.0);
        assert_eq!(rep.source_eigenvalues, rep.target_eigenvalues);
    }
}
