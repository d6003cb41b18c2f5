//! Synthetic scenes and the corruption models applied to their targets.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud::{apply_motion, permute_columns, PermutationMap, PointCloud, RigidMotion};
use crate::error::{Error, Result};

/// Deterministic generator. ChaCha streams are identical on every platform.
#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// A generator for `(master, index, stage)`; streams for different stages
    /// or indices never overlap in practice.
    pub fn derived(master: u64, index: u64, stage: &str) -> Self {
        Self::from_seed(derive_seed(master, index, stage))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.0.random_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mixes a master seed, an index and a stage label into a sub-seed.
pub fn derive_seed(master: u64, index: u64, stage: &str) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ index);
    splitmix64(b ^ fnv1a(stage.as_bytes()))
}

/// A corruption applied to the clean target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionSpec {
    /// Elementwise product with an i.i.d. `N(1, σ²)` mask.
    Multiplicative { sigma: f64 },
    /// Elementwise `N(0, σ²)` offsets.
    Additive { sigma: f64 },
    /// `⌊α·n⌋` clutter points uniform in the bounding box.
    Occlusion { alpha: f64 },
}

impl CorruptionSpec {
    pub fn stage(&self) -> &'static str {
        match self {
            CorruptionSpec::Multiplicative { .. } => "multiplicative",
            CorruptionSpec::Additive { .. } => "additive",
            CorruptionSpec::Occlusion { .. } => "occlusion",
        }
    }

    fn order(&self) -> u8 {
        match self {
            CorruptionSpec::Multiplicative { .. } => 0,
            CorruptionSpec::Additive { .. } => 1,
            CorruptionSpec::Occlusion { .. } => 2,
        }
    }

    pub fn apply(&self, cloud: &PointCloud, rng: &mut Rng) -> Result<PointCloud> {
        match *self {
            CorruptionSpec::Multiplicative { sigma } => multiplicative_noise(cloud, sigma, rng),
            CorruptionSpec::Additive { sigma } => additive_noise(cloud, sigma, rng),
            CorruptionSpec::Occlusion { alpha } => occlude(cloud, alpha, rng),
        }
    }
}

/// A generated registration problem with its ground truth.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub rotation: DMatrix<f64>,
    /// Source column `i` lands in target column `permutation.assignment[i]`.
    pub permutation: PermutationMap,
    pub source: PointCloud,
    pub clean_target: PointCloud,
    /// Clean target after corruption. Its first `n` columns correspond to the
    /// clean target's columns; occlusion appends clutter after them.
    pub corrupted_target: PointCloud,
    pub corruption: Vec<CorruptionSpec>,
}

impl SceneTruth {
    pub fn with_corruption(mut self, specs: &[CorruptionSpec], rng: &mut Rng) -> Result<Self> {
        self.corrupted_target = superpose(&self.clean_target, specs, rng)?;
        self.corruption = specs.to_vec();
        Ok(self)
    }
}

/// `n` points with i.i.d. coordinates uniform in `[−half_width, half_width]`.
pub fn random_cloud(n: usize, d: usize, half_width: f64, rng: &mut Rng) -> Result<PointCloud> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("random_cloud needs n >= 1 and d >= 1"));
    }
    if !(half_width.is_finite() && half_width >= 0.0) {
        return Err(Error::invalid(format!(
            "half_width must be finite and >= 0, got {half_width}"
        )));
    }
    let data = DMatrix::from_fn(d, n, |_, _| rng.uniform(-half_width, half_width));
    PointCloud::new(data)
}

/// Haar-distributed element of O(d): QR of a Gaussian matrix with the signs of
/// `R`'s diagonal folded into `Q`. Both determinant signs are equally likely.
pub fn random_orthogonal(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
        let qr = g.qr();
        let r = qr.r();
        if (0..d).any(|i| r[(i, i)] == 0.0) {
            continue;
        }
        let mut q = qr.q();
        for (i, mut col) in q.column_iter_mut().enumerate() {
            if r[(i, i)] < 0.0 {
                col.neg_mut();
            }
        }
        return q;
    }
}

pub fn random_permutation(n: usize, rng: &mut Rng) -> PermutationMap {
    let mut assignment: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut assignment);
    PermutationMap {
        assignment,
        bijective: true,
    }
}

/// `Q = O·P·S` for a Haar-random `O` and a uniform permutation `S`.
pub fn random_scene(source: &PointCloud, rng: &mut Rng) -> Result<SceneTruth> {
    let rotation = random_orthogonal(source.dim(), rng);
    let permutation = random_permutation(source.len(), rng);
    scene_from(source, rotation, permutation)
}

/// Scene for a given orthogonal matrix and permutation.
pub fn scene_from(
    source: &PointCloud,
    rotation: DMatrix<f64>,
    permutation: PermutationMap,
) -> Result<SceneTruth> {
    let motion = RigidMotion::from_rotation(rotation.clone())?;
    let clean_target = permute_columns(&apply_motion(&motion, source)?, &permutation)?;
    Ok(SceneTruth {
        rotation,
        permutation,
        source: source.clone(),
        corrupted_target: clean_target.clone(),
        clean_target,
        corruption: Vec::new(),
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    Ok(())
}

/// `Q ⊙ N` with `N_ij ~ N(1, σ²)`.
pub fn multiplicative_noise(cloud: &PointCloud, sigma: f64, rng: &mut Rng) -> Result<PointCloud> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let dist = Normal::new(1.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = cloud.matrix().clone();
    for v in data.iter_mut() {
        *v *= dist.sample(&mut rng.0);
    }
    PointCloud::new(data)
}

/// `Q + N` with `N_ij ~ N(0, σ²)`.
pub fn additive_noise(cloud: &PointCloud, sigma: f64, rng: &mut Rng) -> Result<PointCloud> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = cloud.matrix().clone();
    for v in data.iter_mut() {
        *v += dist.sample(&mut rng.0);
    }
    PointCloud::new(data)
}

/// Axis-aligned bounding box as (lower, upper) corners.
pub fn bounding_box(cloud: &PointCloud) -> (DVector<f64>, DVector<f64>) {
    let m = cloud.matrix();
    let lo = DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.min()));
    let hi = DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.max()));
    (lo, hi)
}

/// Appends `⌊α·n⌋` points drawn uniformly in the bounding box; existing
/// columns keep their positions.
pub fn occlude(cloud: &PointCloud, alpha: f64, rng: &mut Rng) -> Result<PointCloud> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let extra = (alpha * cloud.len() as f64).floor() as usize;
    if extra == 0 {
        return Ok(cloud.clone());
    }
    let (lo, hi) = bounding_box(cloud);
    let clutter = DMatrix::from_fn(cloud.dim(), extra, |r, _| rng.uniform(lo[r], hi[r]));
    cloud.concat(&PointCloud::new(clutter)?)
}

/// Drops `⌊β·n⌋` uniformly chosen columns. Returns the reduced cloud and the
/// original indices of the kept columns, in order.
pub fn remove_points(
    cloud: &PointCloud,
    beta: f64,
    rng: &mut Rng,
) -> Result<(PointCloud, Vec<usize>)> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    let drop = (beta * cloud.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    rng.shuffle(&mut idx);
    let mut kept = idx.split_off(drop);
    kept.sort_unstable();
    Ok((cloud.select(&kept)?, kept))
}

/// Applies the corruptions in canonical order: multiplicative, additive, occlusion.
pub fn superpose(
    cloud: &PointCloud,
    specs: &[CorruptionSpec],
    rng: &mut Rng,
) -> Result<PointCloud> {
    let mut ordered = specs.to_vec();
    ordered.sort_by_key(CorruptionSpec::order);
    let mut out = cloud.clone();
    for spec in &ordered {
        out = spec.apply(&out, rng)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_stage_sensitive() {
        assert_eq!(derive_seed(1, 2, "scene"), derive_seed(1, 2, "scene"));
        assert_ne!(derive_seed(1, 2, "scene"), derive_seed(1, 2, "noise"));
        assert_ne!(derive_seed(1, 2, "scene"), derive_seed(1, 3, "scene"));
        assert_ne!(derive_seed(1, 2, "scene"), derive_seed(2, 2, "scene"));
    }

    #[test]
    fn random_cloud_bounds_and_determinism() {
        let a = random_cloud(100, 3, 20.0, &mut Rng::from_seed(7)).unwrap();
        let b = random_cloud(100, 3, 20.0, &mut Rng::from_seed(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().iter().all(|v| (-20.0..=20.0).contains(v)));
        assert!(random_cloud(0, 3, 1.0, &mut Rng::from_seed(0)).is_err());
    }

    #[test]
    fn zero_strength_corruptions_are_identity() {
        let q = random_cloud(30, 3, 5.0, &mut Rng::from_seed(1)).unwrap();
        let mut rng = Rng::from_seed(2);
        assert_eq!(multiplicative_noise(&q, 0.0, &mut rng).unwrap(), q);
        assert_eq!(additive_noise(&q, 0.0, &mut rng).unwrap(), q);
        assert_eq!(occlude(&q, 0.0, &mut rng).unwrap(), q);
        assert_eq!(superpose(&q, &[], &mut rng).unwrap(), q);
        assert!(multiplicative_noise(&q, -0.1, &mut rng).is_err());
        assert!(occlude(&q, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn occlusion_appends_floor_alpha_n_points_inside_box() {
        let q = random_cloud(100, 3, 5.0, &mut Rng::from_seed(3)).unwrap();
        let out = occlude(&q, 0.25, &mut Rng::from_seed(4)).unwrap();
        assert_eq!(out.len(), 125);
        assert_eq!(out.select(&(0..100).collect::<Vec<_>>()).unwrap(), q);
        let (lo, hi) = bounding_box(&q);
        for p in out.points().skip(100) {
            for r in 0..3 {
                assert!(p[r] >= lo[r] && p[r] <= hi[r]);
            }
        }
        assert_eq!(
            occlude(&q, 0.019, &mut Rng::from_seed(4)).unwrap().len(),
            101
        );
    }

    #[test]
    fn single_spec_superposition_matches_direct_call() {
        let q = random_cloud(40, 3, 5.0, &mut Rng::from_seed(5)).unwrap();
        for spec in [
            CorruptionSpec::Multiplicative { sigma: 0.1 },
            CorruptionSpec::Additive { sigma: 0.3 },
            CorruptionSpec::Occlusion { alpha: 0.5 },
        ] {
            let via = superpose(&q, &[spec], &mut Rng::from_seed(9)).unwrap();
            let direct = spec.apply(&q, &mut Rng::from_seed(9)).unwrap();
            assert_eq!(via, direct);
        }
    }

    #[test]
    fn superposition_uses_canonical_order() {
        let q = random_cloud(40, 3, 5.0, &mut Rng::from_seed(5)).unwrap();
        let a = [
            CorruptionSpec::Occlusion { alpha: 0.2 },
            CorruptionSpec::Multiplicative { sigma: 0.1 },
        ];
        let b = [a[1], a[0]];
        assert_eq!(
            superpose(&q, &a, &mut Rng::from_seed(1)).unwrap(),
            superpose(&q, &b, &mut Rng::from_seed(1)).unwrap()
        );
    }

    #[test]
    fn scene_is_exact() {
        let p = random_cloud(20, 3, 1.0, &mut Rng::from_seed(11)).unwrap();
        let s = random_scene(&p, &mut Rng::from_seed(12)).unwrap();
        for (i, &j) in s.permutation.assignment.iter().enumerate() {
            let expected = &s.rotation * DVector::from_column_slice(p.point(i));
            assert_eq!(s.clean_target.point(j), expected.as_slice());
        }
        let residual = crate::cloud::orthogonality_residual(&s.rotation);
        assert!(residual < 1e-12);
    }

    #[test]
    fn removal_keeps_sorted_survivors() {
        let q = random_cloud(10, 2, 1.0, &mut Rng::from_seed(1)).unwrap();
        let (r, kept) = remove_points(&q, 0.3, &mut Rng::from_seed(2)).unwrap();
        assert_eq!(r.len(), 7);
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        for (k, &i) in kept.iter().enumerate() {
            assert_eq!(r.point(k), q.point(i));
        }
        assert!(remove_points(&q, 1.0, &mut Rng::from_seed(2)).is_err());
    }
}
