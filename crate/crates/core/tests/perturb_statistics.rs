mod common;

use common::{explicit_covariance, uniform_cloud};
use eicp::metrics::ellipsoid_deviation;
use eicp::perturb::{
    additive_noise, bounding_box, multiplicative_noise, occlude, random_cloud, random_orthogonal,
    random_scene, remove_points, superpose, CorruptionSpec, Rng,
};
use eicp::shapes::BundledShape;
use eicp::{center, covariance, eigh_sorted, spectral_norm, PointCloud};
use nalgebra::DMatrix;

#[test]
fn zero_strength_is_a_no_op() {
    let q = uniform_cloud(30, 3, 2.0, &mut Rng::from_seed(1));
    let mut rng = Rng::from_seed(2);
    assert_eq!(multiplicative_noise(&q, 0.0, &mut rng).unwrap(), q);
    assert_eq!(additive_noise(&q, 0.0, &mut rng).unwrap(), q);
    assert_eq!(occlude(&q, 0.0, &mut rng).unwrap(), q);
    assert_eq!(superpose(&q, &[], &mut rng).unwrap(), q);
    assert!(multiplicative_noise(&q, -1.0, &mut rng).is_err());
}

#[test]
fn random_cloud_bounds_and_mean() {
    let a = random_cloud(100, 3, 20.0, &mut Rng::from_seed(7)).unwrap();
    assert!(a.matrix().iter().all(|v| v.abs() <= 20.0));
    assert_eq!(
        a,
        random_cloud(100, 3, 20.0, &mut Rng::from_seed(7)).unwrap()
    );
    let mut rng = Rng::from_seed(8);
    let n = 100;
    let bound = 3.0 * 20.0 / (3.0 * n as f64).sqrt();
    let mut outside = 0;
    for _ in 0..200 {
        let c = random_cloud(n, 3, 20.0, &mut rng).unwrap();
        let mean = c.matrix().column_mean();
        outside += mean.iter().filter(|m| m.abs() > bound).count();
    }
    // Three standard errors: roughly 0.3% of 600 coordinates.
    assert!(
        outside <= 10,
        "{outside} coordinate means outside the bound"
    );
}

#[test]
fn scene_preserves_the_spectrum() {
    let mut rng = Rng::from_seed(3);
    for _ in 0..20 {
        let p = uniform_cloud(60, 3, 5.0, &mut rng);
        let t = random_scene(&p, &mut rng).unwrap();
        let ep = explicit_covariance(p.matrix());
        let eq = explicit_covariance(t.clean_target.matrix());
        let conj = &t.rotation * &ep * t.rotation.transpose();
        assert!((&eq - &conj).abs().max() <= 1e-9 * ep.abs().max());
        let (lp, _) = eigh_sorted(&ep).unwrap();
        let (lq, _) = eigh_sorted(&eq).unwrap();
        assert!((lp - lq).abs().max() <= 1e-9 * ep.abs().max());
    }
}

/// Kolmogorov–Smirnov distance between the sample and U(−1, 1).
fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x + 1.0) / 2.0;
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn haar_first_column_is_uniform_on_the_sphere() {
    // On S², each coordinate of a uniform point is U(−1, 1) (Archimedes).
    let mut rng = Rng::from_seed(4);
    let draws: Vec<DMatrix<f64>> = (0..10_000)
        .map(|_| random_orthogonal(3, &mut rng))
        .collect();
    let critical = 1.63 / 100.0; // 1% level for n = 10⁴
    for axis in 0..3 {
        let ks = ks_uniform(draws.iter().map(|o| o[(axis, 0)]).collect());
        assert!(ks < critical, "axis {axis}: KS {ks}");
    }
    let negative = draws.iter().filter(|o| o.determinant() < 0.0).count();
    assert!(
        (negative as f64 / 1e4 - 0.5).abs() < 0.02,
        "{negative} reflections"
    );
}

#[test]
fn multiplicative_mask_is_unbiased() {
    let q = uniform_cloud(20, 3, 4.0, &mut Rng::from_seed(5));
    let sigma = 0.1;
    let mut rng = Rng::from_seed(6);
    let draws = 10_000;
    let mut sum = DMatrix::zeros(3, 20);
    for _ in 0..draws {
        sum += multiplicative_noise(&q, sigma, &mut rng).unwrap().matrix();
    }
    let mean = sum / draws as f64;
    for (m, v) in mean.iter().zip(q.matrix().iter()) {
        assert!((m - v).abs() <= 5.0 * sigma * v.abs() / 100.0 + 1e-15);
    }
}

#[test]
fn additive_noise_has_the_requested_variance() {
    let q = uniform_cloud(10, 3, 4.0, &mut Rng::from_seed(7));
    let sigma = 0.3;
    let mut rng = Rng::from_seed(8);
    let draws = 10_000;
    let mut sum = DMatrix::zeros(3, 10);
    let mut sq = DMatrix::zeros(3, 10);
    for _ in 0..draws {
        let e = additive_noise(&q, sigma, &mut rng).unwrap().into_matrix() - q.matrix();
        sq += e.component_mul(&e);
        sum += e;
    }
    let n = draws as f64;
    for (s, s2) in sum.iter().zip(sq.iter()) {
        let var = (s2 - s * s / n) / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "variance {var}");
    }
}

#[test]
fn occlusion_adds_floor_alpha_n_points_inside_the_box() {
    let q = uniform_cloud(100, 3, 2.0, &mut Rng::from_seed(9));
    let out = occlude(&q, 0.25, &mut Rng::from_seed(10)).unwrap();
    assert_eq!(out.len(), 125);
    assert_eq!(out.matrix().columns(0, 100), q.matrix().columns(0, 100));
    let (lo, hi) = bounding_box(&q);
    for p in out.points().skip(100) {
        for r in 0..3 {
            assert!(p[r] >= lo[r] && p[r] <= hi[r]);
        }
    }
    assert_eq!(
        occlude(&q, 0.019, &mut Rng::from_seed(1)).unwrap().len(),
        101
    );

    // Clutter is centered on the box.
    let mut rng = Rng::from_seed(11);
    let big = occlude(&q, 100.0, &mut rng).unwrap();
    let added = big.matrix().columns(100, 10_000).column_mean();
    let centre = (&lo + &hi) / 2.0;
    for r in 0..3 {
        let sd = (hi[r] - lo[r]) / 12f64.sqrt() / 100.0;
        assert!((added[r] - centre[r]).abs() < 5.0 * sd);
    }
}

#[test]
fn occlusion_ellipsoids_add_in_the_common_frame() {
    let mut rng = Rng::from_seed(12);
    for _ in 0..50 {
        let q = uniform_cloud(80, 3, 3.0, &mut rng);
        let q_prime = occlude(&q, 0.6, &mut rng).unwrap();
        let b = q_prime.matrix().column_mean();
        let shift = |m: DMatrix<f64>| {
            let mut m = m;
            for mut c in m.column_iter_mut() {
                c -= &b;
            }
            m
        };
        let whole = explicit_covariance(&shift(q_prime.matrix().clone()));
        let part = explicit_covariance(&shift(q.matrix().clone()));
        let clutter = explicit_covariance(&shift(q_prime.matrix().columns(80, 48).into_owned()));
        let lib = covariance(&center(&q_prime).0).unwrap().matrix;
        assert!((&whole - (&part + &clutter)).abs().max() <= 1e-9 * whole.abs().max());
        assert!((&lib - &whole).abs().max() <= 1e-9 * whole.abs().max());
    }
}

#[test]
fn superpose_uses_canonical_order_and_one_stream() {
    let q = uniform_cloud(40, 3, 1.0, &mut Rng::from_seed(13));
    let specs = [
        CorruptionSpec::Occlusion { alpha: 0.1 },
        CorruptionSpec::Multiplicative { sigma: 0.1 },
        CorruptionSpec::Additive { sigma: 0.01 },
    ];
    let combined = superpose(&q, &specs, &mut Rng::from_seed(14)).unwrap();
    let mut rng = Rng::from_seed(14);
    let manual = multiplicative_noise(&q, 0.1, &mut rng).unwrap();
    let manual = additive_noise(&manual, 0.01, &mut rng).unwrap();
    let manual = occlude(&manual, 0.1, &mut rng).unwrap();
    assert_eq!(combined, manual);

    let single = superpose(
        &q,
        &[CorruptionSpec::Additive { sigma: 0.2 }],
        &mut Rng::from_seed(15),
    )
    .unwrap();
    assert_eq!(
        single,
        additive_noise(&q, 0.2, &mut Rng::from_seed(15)).unwrap()
    );
}

fn padded_nu(clean: &PointCloud, corrupted: &PointCloud, source: &PointCloud) -> f64 {
    let mut diff = corrupted.matrix().clone();
    let n = clean.len();
    let mut head = diff.columns_mut(0, n);
    head -= clean.matrix();
    spectral_norm(&diff) / spectral_norm(source.matrix())
}

#[test]
fn corruption_levels_on_bundled_clouds() {
    let teapot = BundledShape::Teapot.load().unwrap();
    let mult = multiplicative_noise(&teapot, 0.1, &mut Rng::from_seed(16)).unwrap();
    let nu_mult = padded_nu(&teapot, &mult, &teapot);
    assert!((nu_mult / 0.087 - 1.0).abs() <= 0.3, "ν = {nu_mult}");

    let bunny = BundledShape::Bunny.load().unwrap();
    let add = additive_noise(&bunny, 0.01, &mut Rng::from_seed(17)).unwrap();
    let nu_add = padded_nu(&bunny, &add, &bunny);
    assert!((nu_add / 0.074 - 1.0).abs() <= 0.3, "ν = {nu_add}");

    let specs = [
        CorruptionSpec::Multiplicative { sigma: 0.1 },
        CorruptionSpec::Additive { sigma: 0.01 },
        CorruptionSpec::Occlusion { alpha: 0.05 },
    ];
    let all = superpose(&teapot, &specs, &mut Rng::from_seed(18)).unwrap();
    let nu_all = padded_nu(&teapot, &all, &teapot);
    let singles: Vec<f64> = specs
        .iter()
        .map(|s| {
            padded_nu(
                &teapot,
                &s.apply(&teapot, &mut Rng::from_seed(18)).unwrap(),
                &teapot,
            )
        })
        .collect();
    assert!(nu_all.is_finite());
    for s in singles {
        assert!(nu_all > s, "{nu_all} vs {s}");
    }
}

#[test]
fn multiplicative_ellipsoid_mean_and_bias_bound() {
    let q = center(&BundledShape::Teapot.load().unwrap()).0;
    let e_q = explicit_covariance(q.matrix());
    let sigma = 0.1;
    let mut rng = Rng::from_seed(19);
    let draws = 10_000;
    let samples: Vec<DMatrix<f64>> = (0..draws)
        .map(|_| explicit_covariance(multiplicative_noise(&q, sigma, &mut rng).unwrap().matrix()))
        .collect();
    let mean = samples.iter().fold(DMatrix::zeros(3, 3), |acc, e| acc + e) / draws as f64;
    let expected = &e_q + DMatrix::from_diagonal(&e_q.diagonal()) * (sigma * sigma);
    let rel = (&mean - &expected).norm() / expected.norm();
    assert!(rel <= 0.02, "relative Frobenius error {rel}");

    // The bias bound on the sample mean, with three standard errors of slack.
    let spread = samples
        .iter()
        .map(|e| (e - &mean).norm_squared())
        .sum::<f64>()
        / (draws - 1) as f64;
    let stderr = (spread / draws as f64).sqrt();
    assert!(spectral_norm(&(&mean - &e_q)) <= sigma * sigma * spectral_norm(&e_q) + 3.0 * stderr);
}

#[test]
fn deviation_bound_holds_for_small_sigma() {
    for (sigma, max_rate) in [(0.05f64, 0.10), (0.01, 0.10)] {
        let bound = (3.0 * 3.0 * sigma).sqrt() + sigma * sigma;
        let mut rng = Rng::from_seed(20);
        let q = uniform_cloud(100, 3, 20.0, &mut rng);
        let violations = (0..1000)
            .filter(|_| {
                let noisy = multiplicative_noise(&q, sigma, &mut rng).unwrap();
                ellipsoid_deviation(&q, &noisy).unwrap().spectral > bound
            })
            .count();
        assert!(
            (violations as f64) < max_rate * 1000.0,
            "σ={sigma}: {violations} violations"
        );
    }
}

#[test]
fn point_removal_keeps_order() {
    let q = uniform_cloud(50, 2, 1.0, &mut Rng::from_seed(21));
    let (kept, idx) = remove_points(&q, 0.3, &mut Rng::from_seed(22)).unwrap();
    assert_eq!(kept.len(), 35);
    assert!(idx.windows(2).all(|w| w[0] < w[1]));
    for (c, &i) in idx.iter().enumerate() {
        assert_eq!(kept.point(c), q.point(i));
    }
    assert!(remove_points(&q, 1.0, &mut Rng::from_seed(1)).is_err());
}
