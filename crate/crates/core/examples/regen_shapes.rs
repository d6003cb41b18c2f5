use eicp::io::{save_cloud, CloudFormat};
use eicp::linalg::covariance;
use eicp::shapes::BundledShape;

fn main() {
    for shape in BundledShape::ALL {
        let cloud = shape.generate().unwrap();
        let path =
            std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("data/{shape}.xyz"));
        save_cloud(&path, &cloud, Some(CloudFormat::Xyz)).unwrap();
        let e = covariance(&eicp::center(&cloud).0).unwrap();
        println!(
            "{shape}: n={} eig={:?} gap={:.3}",
            cloud.len(),
            e.eigenvalues.as_slice(),
            e.spectral_gap
        );
    }
}
