//! Inputs shared by the benchmarks.

use gareg_core::{Point3, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in a 100 mm cube.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..100.0),
                )
            })
            .collect(),
    )
}

/// Exhaustive nearest neighbor; the baseline the KD-tree is measured against.
pub fn brute_nearest(cloud: &PointCloud, q: &Point3) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in cloud.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}
