use eicp::io::{format_cloud, load_cloud, save_cloud, CloudFormat};
use eicp::{Error, PointCloud};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    (1usize..5, 1usize..40).prop_flat_map(|(d, n)| {
        proptest::collection::vec(prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, Just(0.0)], d * n)
            .prop_map(move |v| PointCloud::new(DMatrix::from_vec(d, n, v)).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_reproduces_coordinates(cloud in cloud_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let mut formats = vec![("c.xyz", CloudFormat::Xyz), ("c.csv", CloudFormat::Csv)];
        if cloud.dim() == 3 {
            formats.push(("c.ply", CloudFormat::PlyAscii));
        }
        for (name, format) in formats {
            let path = dir.path().join(name);
            save_cloud(&path, &cloud, None).unwrap();
            let back = load_cloud(&path, Some(format)).unwrap();
            prop_assert_eq!(back.dim(), cloud.dim());
            prop_assert_eq!(back.len(), cloud.len());
            for (a, b) in back.matrix().iter().zip(cloud.matrix().iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn two_line_file_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.xyz");
    std::fs::write(&path, "0 0 0\n1 2 3\n").unwrap();
    let c = load_cloud(&path, None).unwrap();
    assert_eq!((c.dim(), c.len()), (3, 2));
    assert_eq!(c.point(1), &[1.0, 2.0, 3.0]);
}

#[test]
fn ragged_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.xyz");
    std::fs::write(&path, "0 0 0\n1 2 3\n4 5\n").unwrap();
    match load_cloud(&path, None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn ply_faces_are_skipped() {
    let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
                element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tri.ply");
    std::fs::write(&path, text).unwrap();
    let c = load_cloud(&path, None).unwrap();
    assert_eq!((c.dim(), c.len()), (3, 3));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_cloud(std::path::Path::new("/nonexistent/cloud.xyz"), None).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn seventeen_significant_digits() {
    let c = PointCloud::from_points(&[[0.1, 1.0 / 3.0, -2e-300]]).unwrap();
    let text = format_cloud(&c, CloudFormat::Xyz).unwrap();
    let parsed: Vec<f64> = text
        .split_whitespace()
        .map(|f| f.parse().unwrap())
        .collect();
    assert_eq!(parsed, vec![0.1, 1.0 / 3.0, -2e-300]);
}
