//! Point-to-point ICP with orthogonal Procrustes estimation, and the
//! end-to-end registration pipeline.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::cloud::{apply_motion, barycenter, PermutationMap, PointCloud, RigidMotion};
use crate::einit::{e_init, EInitParams, EInitResult};
use crate::error::{Error, Result};
use crate::spatial::{match_against, NeighborIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the cost improves by less than this fraction of the previous cost.
    pub relative_tolerance: f64,
    /// Stop once the cost falls below this multiple of the source scale.
    pub absolute_tolerance: f64,
    /// Estimate over O(d) instead of SO(d).
    pub allow_reflections: bool,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_tolerance: 1e-8,
            absolute_tolerance: 1e-12,
            allow_reflections: true,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.relative_tolerance) || !positive(self.absolute_tolerance) {
            return Err(Error::invalid("ICP tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub motion: RigidMotion,
    /// Nearest target column of every transformed source point under `motion`.
    pub correspondences: PermutationMap,
    /// Match score at the start of every iteration.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcpResult {
    pub fn final_cost(&self) -> f64 {
        self.cost_trace
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesEstimate {
    pub rotation: DMatrix<f64>,
    /// Set when the SO(d) sign correction is not uniquely determined because the
    /// cross-covariance is rank deficient.
    pub ambiguous: bool,
}

/// `argmin_R Σ ‖R·xᵢ − yᵢ‖²` over O(d), or SO(d) when reflections are disallowed.
///
/// Both clouds must already be centered by the caller; columns are paired by index.
pub fn procrustes(
    source: &PointCloud,
    target: &PointCloud,
    allow_reflections: bool,
) -> Result<ProcrustesEstimate> {
    if source.dim() != target.dim() || source.len() != target.len() {
        return Err(Error::invalid(format!(
            "procrustes needs paired clouds, got {}x{} and {}x{}",
            source.dim(),
            source.len(),
            target.dim(),
            target.len()
        )));
    }
    let cross = target.matrix() * source.matrix().transpose();
    procrustes_from_cross(&cross, allow_reflections)
}

fn procrustes_from_cross(
    cross: &DMatrix<f64>,
    allow_reflections: bool,
) -> Result<ProcrustesEstimate> {
    let d = cross.nrows();
    let svd = SVD::try_new(cross.clone(), true, true, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::NumericalFailure("SVD of cross-covariance did not converge".into())
    })?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    // nalgebra does not promise sorted singular values; find the smallest explicitly.
    let (smallest, &sigma_min) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let sigma_max = svd.singular_values.max();
    let rank_deficient = sigma_max == 0.0 || sigma_min <= 1e-12 * sigma_max;

    let mut rotation = u * v_t;
    let mut ambiguous = false;
    if !allow_reflections && rotation.determinant() < 0.0 {
        let mut flip = DVector::from_element(d, 1.0);
        flip[smallest] = -1.0;
        rotation = u * DMatrix::from_diagonal(&flip) * v_t;
        ambiguous = rank_deficient;
    }
    Ok(ProcrustesEstimate {
        rotation,
        ambiguous,
    })
}

/// Rigid motion minimizing the squared distance between paired columns, with
/// the translation fixed by aligning barycenters.
pub fn estimate_motion(
    source: &PointCloud,
    target: &PointCloud,
    allow_reflections: bool,
) -> Result<(RigidMotion, bool)> {
    if source.dim() != target.dim() || source.len() != target.len() {
        return Err(Error::invalid("estimate_motion needs paired clouds"));
    }
    let bs = barycenter(source);
    let bt = barycenter(target);
    let mut cross = DMatrix::zeros(source.dim(), source.dim());
    for (x, y) in source.points().zip(target.points()) {
        let x = DVector::from_column_slice(x) - &bs;
        let y = DVector::from_column_slice(y) - &bt;
        cross += y * x.transpose();
    }
    let est = procrustes_from_cross(&cross, allow_reflections)?;
    let translation = &bt - &est.rotation * &bs;
    Ok((RigidMotion::new(est.rotation, translation)?, est.ambiguous))
}

/// Iterative closest point from `init`.
///
/// Each iteration matches every transformed source point to its nearest target
/// point, then re-estimates the motion from those pairs. Returns the best
/// motion seen.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidMotion,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    if source.dim() != target.dim() || init.dim() != source.dim() {
        return Err(Error::invalid(
            "source, target and initial motion dimensions differ",
        ));
    }
    let index = NeighborIndex::build(target);
    let (centered, _) = crate::cloud::center(source);
    let scale = (centered.matrix().norm_squared() / source.len() as f64).sqrt();
    let floor = params.absolute_tolerance * scale.max(f64::MIN_POSITIVE);

    let mut motion = init.clone();
    let mut best: Option<(RigidMotion, PermutationMap, f64)> = None;
    let mut cost_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        let moved = apply_motion(&motion, source)?;
        let matched = match_against(&moved, &index)?;
        let cost = matched.score;
        let previous = cost_trace.last().copied();
        cost_trace.push(cost);

        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((motion.clone(), matched.assignment.clone(), cost));
        }
        if cost <= floor {
            converged = true;
            break;
        }
        if let Some(prev) = previous {
            if prev - cost < params.relative_tolerance * prev {
                converged = true;
                break;
            }
        }

        let assignment = &matched.assignment.assignment;
        if source.len() > 1 && assignment.iter().all(|&j| j == assignment[0]) {
            return Err(Error::DegenerateCorrespondence(format!(
                "all {} source points matched target point {}",
                source.len(),
                assignment[0]
            )));
        }
        let paired = target.select(assignment)?;
        let (next, _) = estimate_motion(source, &paired, params.allow_reflections)?;
        motion = next;
    }

    let (motion, correspondences, _) = best.expect("at least one iteration");
    Ok(IcpResult {
        motion,
        correspondences,
        cost_trace,
        iterations,
        converged,
    })
}

/// How registration obtains the motion ICP starts from.
#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    Ellipsoid(EInitParams),
    Identity,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Present when the ellipsoid initializer ran.
    pub e_init: Option<EInitResult>,
    pub initial_motion: RigidMotion,
    pub icp: IcpResult,
}

impl RegistrationResult {
    pub fn final_motion(&self) -> &RigidMotion {
        &self.icp.motion
    }
}

/// Ellipsoid initialization followed by ICP.
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    einit: &EInitParams,
    params: &IcpParams,
) -> Result<RegistrationResult> {
    register_with(
        source,
        target,
        &Initialization::Ellipsoid(einit.clone()),
        params,
    )
}

pub fn register_with(
    source: &PointCloud,
    target: &PointCloud,
    init: &Initialization,
    params: &IcpParams,
) -> Result<RegistrationResult> {
    params.validate()?;
    let (e_init_result, initial_motion) = match init {
        Initialization::Ellipsoid(p) => {
            let r = e_init(source, target, p)?;
            let m = r.motion.clone();
            (Some(r), m)
        }
        Initialization::Identity => {
            if source.dim() != target.dim() {
                return Err(Error::invalid("source and target dimensions differ"));
            }
            (None, RigidMotion::identity(source.dim()))
        }
    };
    let icp = icp(source, target, &initial_motion, params)?;
    Ok(RegistrationResult {
        e_init: e_init_result,
        initial_motion,
        icp,
    })
}
