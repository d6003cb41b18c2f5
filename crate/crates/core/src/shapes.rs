//! Procedural test clouds.
//!
//! Three asymmetric surface samplings loosely shaped like a teapot, a bunny
//! and a cow. They are generated from fixed seeds, centered, and scaled so the
//! RMS extent along the major principal axis is [`MAJOR_AXIS_RMS`]. The
//! committed copies under `data/` are byte-identical to [`format_cloud`] of
//! the generated clouds.
//!
//! [`format_cloud`]: crate::io::format_cloud

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::{center, PointCloud};
use crate::error::{Error, Result};
use crate::io::{parse_xyz, CloudFormat};
use crate::linalg::covariance;
use crate::perturb::Rng;

/// `sqrt(λ₁ / n)` of every bundled cloud.
pub const MAJOR_AXIS_RMS: f64 = 0.135;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundledShape {
    Teapot,
    Bunny,
    Cow,
}

impl BundledShape {
    pub const ALL: [BundledShape; 3] =
        [BundledShape::Teapot, BundledShape::Bunny, BundledShape::Cow];

    pub fn name(self) -> &'static str {
        match self {
            BundledShape::Teapot => "teapot",
            BundledShape::Bunny => "bunny",
            BundledShape::Cow => "cow",
        }
    }

    fn committed(self) -> &'static str {
        match self {
            BundledShape::Teapot => include_str!("../data/teapot.xyz"),
            BundledShape::Bunny => include_str!("../data/bunny.xyz"),
            BundledShape::Cow => include_str!("../data/cow.xyz"),
        }
    }

    /// The committed copy shipped with the crate.
    pub fn load(self) -> Result<PointCloud> {
        parse_xyz(self.committed(), std::path::Path::new(self.name()))
    }

    /// Regenerates the cloud from its seed.
    pub fn generate(self) -> Result<PointCloud> {
        let raw = match self {
            BundledShape::Teapot => teapot(&mut Rng::from_seed(0x7ea_907)),
            BundledShape::Bunny => bunny(&mut Rng::from_seed(0xb_0220)),
            BundledShape::Cow => cow(&mut Rng::from_seed(0xc_0771)),
        };
        normalize(&raw)
    }

    pub fn file_format() -> CloudFormat {
        CloudFormat::Xyz
    }
}

impl fmt::Display for BundledShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BundledShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "teapot" => Ok(BundledShape::Teapot),
            "bunny" => Ok(BundledShape::Bunny),
            "cow" => Ok(BundledShape::Cow),
            other => Err(Error::Config(format!(
                "unknown bundled cloud '{other}', expected teapot|bunny|cow"
            ))),
        }
    }
}

fn normalize(points: &[Vector3<f64>]) -> Result<PointCloud> {
    let flat: Vec<f64> = points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    let cloud = PointCloud::new(DMatrix::from_column_slice(3, points.len(), &flat))?;
    let (centered, _) = center(&cloud);
    let e = covariance(&centered)?;
    let rms = (e.largest() / centered.len() as f64).sqrt();
    centered.scaled(MAJOR_AXIS_RMS / rms)
}

fn unit_sphere(rng: &mut Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.standard_normal(),
            rng.standard_normal(),
            rng.standard_normal(),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn ellipsoid(
    out: &mut Vec<Vector3<f64>>,
    rng: &mut Rng,
    count: usize,
    centre: Vector3<f64>,
    radii: Vector3<f64>,
) {
    for _ in 0..count {
        out.push(centre + unit_sphere(rng).component_mul(&radii));
    }
}

/// Two unit vectors orthogonal to `axis` and to each other.
fn frame(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = axis.normalize();
    let helper = if a.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = a.cross(&helper).normalize();
    let v = a.cross(&u);
    (u, v)
}

/// Tube around the segment `from → to` with linearly varying radius.
fn tube(
    out: &mut Vec<Vector3<f64>>,
    rng: &mut Rng,
    count: usize,
    from: Vector3<f64>,
    to: Vector3<f64>,
    radius: (f64, f64),
) {
    let axis = to - from;
    let (u, v) = frame(&axis);
    for _ in 0..count {
        let t = rng.uniform(0.0, 1.0);
        let theta = rng.uniform(0.0, 2.0 * PI);
        let r = radius.0 + t * (radius.1 - radius.0);
        out.push(from + axis * t + (u * theta.cos() + v * theta.sin()) * r);
    }
}

/// Part of a torus: the tube of radius `minor` around an arc of radius `major`
/// in the plane spanned by `e1`, `e2`.
#[allow(clippy::too_many_arguments)]
fn torus_arc(
    out: &mut Vec<Vector3<f64>>,
    rng: &mut Rng,
    count: usize,
    centre: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    major: f64,
    minor: f64,
    arc: (f64, f64),
) {
    let e1 = e1.normalize();
    let e2 = (e2 - e1 * e1.dot(&e2)).normalize();
    let normal = e1.cross(&e2);
    for _ in 0..count {
        let phi = rng.uniform(arc.0, arc.1);
        let theta = rng.uniform(0.0, 2.0 * PI);
        let radial = e1 * phi.cos() + e2 * phi.sin();
        let ring = centre + radial * major;
        out.push(ring + (radial * theta.cos() + normal * theta.sin()) * minor);
    }
}

fn teapot(rng: &mut Rng) -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(1200);
    // Body, slightly squashed and longer along x.
    ellipsoid(
        &mut pts,
        rng,
        760,
        Vector3::zeros(),
        Vector3::new(1.25, 0.95, 0.5),
    );
    // Spout, leaning out of the x-z plane.
    tube(
        &mut pts,
        rng,
        180,
        Vector3::new(1.05, 0.05, -0.15),
        Vector3::new(1.85, 0.3, 0.55),
        (0.16, 0.06),
    );
    // Handle, offset towards +y.
    torus_arc(
        &mut pts,
        rng,
        160,
        Vector3::new(-1.2, 0.12, 0.05),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 0.15, 1.0),
        0.38,
        0.06,
        (-PI / 2.0, PI / 2.0),
    );
    // Lid knob, off-centre.
    ellipsoid(
        &mut pts,
        rng,
        100,
        Vector3::new(0.15, -0.12, 0.68),
        Vector3::new(0.14, 0.14, 0.1),
    );
    pts
}

fn bunny(rng: &mut Rng) -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(1500);
    ellipsoid(
        &mut pts,
        rng,
        800,
        Vector3::zeros(),
        Vector3::new(0.95, 0.6, 0.55),
    );
    ellipsoid(
        &mut pts,
        rng,
        320,
        Vector3::new(0.9, 0.12, 0.5),
        Vector3::new(0.42, 0.36, 0.38),
    );
    // Ears of different lengths and tilts.
    tube(
        &mut pts,
        rng,
        150,
        Vector3::new(0.95, 0.28, 0.82),
        Vector3::new(0.75, 0.45, 1.75),
        (0.09, 0.05),
    );
    tube(
        &mut pts,
        rng,
        120,
        Vector3::new(1.05, -0.02, 0.82),
        Vector3::new(1.45, -0.2, 1.5),
        (0.09, 0.04),
    );
    ellipsoid(
        &mut pts,
        rng,
        110,
        Vector3::new(-1.0, -0.08, 0.15),
        Vector3::new(0.17, 0.15, 0.15),
    );
    pts
}

fn cow(rng: &mut Rng) -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(1000);
    ellipsoid(
        &mut pts,
        rng,
        480,
        Vector3::zeros(),
        Vector3::new(1.2, 0.5, 0.45),
    );
    // Head lifted and turned to one side.
    ellipsoid(
        &mut pts,
        rng,
        150,
        Vector3::new(1.45, 0.22, 0.35),
        Vector3::new(0.35, 0.2, 0.22),
    );
    let legs = [
        (Vector3::new(0.8, 0.3, -0.3), Vector3::new(0.85, 0.32, -1.2)),
        (
            Vector3::new(0.75, -0.3, -0.3),
            Vector3::new(0.95, -0.35, -1.2),
        ),
        (
            Vector3::new(-0.8, 0.28, -0.3),
            Vector3::new(-0.8, 0.3, -1.2),
        ),
        (
            Vector3::new(-0.85, -0.3, -0.3),
            Vector3::new(-0.7, -0.28, -1.2),
        ),
    ];
    for (from, to) in legs {
        tube(&mut pts, rng, 70, from, to, (0.1, 0.07));
    }
    // Tail swinging to -y.
    tube(
        &mut pts,
        rng,
        90,
        Vector3::new(-1.15, 0.0, 0.2),
        Vector3::new(-1.35, -0.35, -0.55),
        (0.04, 0.02),
    );
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::format_cloud;

    #[test]
    fn committed_files_match_generator() {
        for shape in BundledShape::ALL {
            let generated = shape.generate().unwrap();
            let text = format_cloud(&generated, CloudFormat::Xyz).unwrap();
            assert_eq!(
                text,
                shape.committed(),
                "{shape} drifted from data/{shape}.xyz"
            );
            assert_eq!(shape.load().unwrap(), generated);
        }
    }

    #[test]
    fn bundled_clouds_have_well_separated_spectra() {
        for shape in BundledShape::ALL {
            let cloud = shape.load().unwrap();
            let e = covariance(&center(&cloud).0).unwrap();
            assert!(e.spectral_gap > 0.1, "{shape}: gap {}", e.spectral_gap);
            let rms = (e.largest() / cloud.len() as f64).sqrt();
            assert!((rms - MAJOR_AXIS_RMS).abs() < 1e-12);
        }
    }
}
