//! Rigid point-cloud registration with covariance-ellipsoid initialization.
//!
//! The pipeline centers both clouds, aligns the principal axes of their
//! inertia ellipsoids, resolves the remaining axis-flip ambiguity by
//! nearest-neighbour scoring over a finite group of signed permutations, and
//! hands the resulting motion to a point-to-point ICP loop. The [`harness`]
//! module reproduces noise, occlusion and superposition robustness studies
//! from seeded batches.

pub mod cloud;
pub mod einit;
pub mod error;
pub mod group;
pub mod harness;
pub mod icp;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod perturb;
pub mod shapes;
pub mod spatial;

pub use cloud::{apply_motion, barycenter, center, PermutationMap, PointCloud, RigidMotion};
pub use einit::{e_init, spectrum_report, EInitParams, EInitResult, EInitWarning, SpectrumReport};
pub use error::{Error, Result};
pub use group::{enumerate_group, CandidateGroup, GroupKind, SignedPermutation};
pub use icp::{
    icp, procrustes, register, register_with, IcpParams, IcpResult, Initialization,
    RegistrationResult,
};
pub use linalg::{
    covariance, eigh_sorted, frobenius_norm, spectral_norm, CovarianceEllipsoid, SpectrumThresholds,
};
pub use metrics::{ellipsoid_deviation, evaluate, success_rate, TrialRecord};
pub use perturb::{CorruptionSpec, Rng, SceneTruth};
pub use spatial::{match_score, MatchResult, NeighborIndex};
