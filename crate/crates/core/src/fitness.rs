//! Scoring a candidate motion by nearest-neighbor distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MotionMapper, Point3, PointCloud, RigidMotion};
use crate::spatial::SpatialIndex;

/// How per-point distances are aggregated into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FitnessKind {
    #[default]
    #[serde(rename = "mean")]
    MeanDistance,
    #[serde(rename = "median")]
    MedianDistance,
}

impl FitnessKind {
    pub fn aggregate(self, distances: &mut [f64]) -> f64 {
        match self {
            FitnessKind::MeanDistance => mean(distances),
            FitnessKind::MedianDistance => lower_median(distances),
        }
    }
}

impl std::str::FromStr for FitnessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(FitnessKind::MeanDistance),
            "median" => Ok(FitnessKind::MedianDistance),
            other => Err(Error::InvalidConfig(format!(
                "unknown fitness kind `{other}` (expected mean or median)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    pub kind: FitnessKind,
    /// Mean or lower-median nearest-neighbor distance, mm.
    pub score: f64,
    /// Share of source points whose nearest target point is closer than
    /// `overlap_threshold`, in percent.
    pub overlap_percent: f64,
    pub overlap_threshold: f64,
    pub per_point_distances: Vec<f64>,
}

/// Sequential sum in input order, so the result does not depend on how
/// callers parallelize around it.
fn mean(distances: &[f64]) -> f64 {
    distances.iter().sum::<f64>() / distances.len() as f64
}

/// Element `(n - 1) / 2` of the sorted distances; reorders the slice.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *m
}

pub fn evaluate_motion(
    motion: &RigidMotion,
    source: &PointCloud,
    target_index: &SpatialIndex,
    kind: FitnessKind,
    overlap_threshold: f64,
) -> Result<FitnessReport> {
    source.require_non_empty()?;
    if !(overlap_threshold > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "overlap threshold must be positive, got {overlap_threshold}"
        )));
    }
    let mapper = motion.mapper();
    let per_point_distances: Vec<f64> = source
        .iter()
        .map(|p| target_index.nearest_distance_squared(&mapper.apply(p)).sqrt())
        .collect();
    let within = per_point_distances
        .iter()
        .filter(|&&d| d < overlap_threshold)
        .count();
    let mut scratch = per_point_distances.clone();
    Ok(FitnessReport {
        kind,
        score: kind.aggregate(&mut scratch),
        overlap_percent: 100.0 * within as f64 / source.len() as f64,
        overlap_threshold,
        per_point_distances,
    })
}

/// Score only, for the inner loop of the optimizer. `source` must be non-empty.
pub(crate) fn score_mapped(
    mapper: &MotionMapper,
    source: &[Point3],
    target_index: &SpatialIndex,
    kind: FitnessKind,
) -> f64 {
    match kind {
        FitnessKind::MeanDistance => {
            let mut sum = 0.0;
            for p in source {
                sum += target_index.nearest_distance_squared(&mapper.apply(p)).sqrt();
            }
            sum / source.len() as f64
        }
        FitnessKind::MedianDistance => {
            let mut d: Vec<f64> = source
                .iter()
                .map(|p| target_index.nearest_distance_squared(&mapper.apply(p)).sqrt())
                .collect();
            lower_median(&mut d)
        }
    }
}

/// Twice the median spacing between each target point and its nearest
/// other target point.
pub fn overlap_threshold_default(target: &PointCloud) -> Result<f64> {
    if target.len() < 2 {
        return Err(Error::DegenerateCloud(format!(
            "overlap threshold needs at least 2 target points, got {}",
            target.len()
        )));
    }
    let index = SpatialIndex::build(target)?;
    let mut spacing: Vec<f64> = target
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .nearest_excluding(p, i)
                .map(|n| n.distance)
                .expect("index holds at least two points")
        })
        .collect();
    Ok(2.0 * lower_median(&mut spacing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_motion, EulerAngles};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
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

    fn grid(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    pts.push(Point3::new(x as f64, y as f64, z as f64) * spacing);
                }
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn self_alignment_is_perfect() {
        let cloud = random_cloud(500, 1);
        let index = SpatialIndex::build(&cloud).unwrap();
        let r = evaluate_motion(&RigidMotion::identity(), &cloud, &index, FitnessKind::MeanDistance, 1.0)
            .unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.overlap_percent, 100.0);
    }

    #[test]
    fn three_four_five() {
        let source = PointCloud::new(vec![Point3::origin()]);
        let target = PointCloud::new(vec![Point3::new(3.0, 4.0, 0.0)]);
        let index = SpatialIndex::build(&target).unwrap();
        let r = evaluate_motion(&RigidMotion::identity(), &source, &index, FitnessKind::MeanDistance, 1.0)
            .unwrap();
        assert_eq!(r.score, 5.0);
        assert_eq!(r.overlap_percent, 0.0);
    }

    #[test]
    fn known_motion_gives_zero_score() {
        let a = random_cloud(1000, 2);
        let m = RigidMotion::new(EulerAngles::new(12.0, -40.0, 75.0), Vector3::new(5.0, -20.0, 33.0));
        let b = apply_motion(&m, &a).unwrap();
        let index = SpatialIndex::build(&b).unwrap();
        let r = evaluate_motion(&m, &a, &index, FitnessKind::MeanDistance, 1.0).unwrap();
        assert!(r.score < 1e-9);
    }

    #[test]
    fn aggregates_are_consistent() {
        let a = random_cloud(401, 3);
        let b = random_cloud(300, 4);
        let index = SpatialIndex::build(&b).unwrap();
        let m = RigidMotion::translation_only(Vector3::new(1.0, 2.0, 3.0));
        let mean = evaluate_motion(&m, &a, &index, FitnessKind::MeanDistance, 5.0).unwrap();
        let sum: f64 = mean.per_point_distances.iter().sum();
        assert!(((sum / 401.0) - mean.score).abs() <= 1e-12 * mean.score);

        let median = evaluate_motion(&m, &a, &index, FitnessKind::MedianDistance, 5.0).unwrap();
        let mut sorted = median.per_point_distances.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(median.score, sorted[200]);

        // The fast path agrees with the full report.
        let fast = score_mapped(&m.mapper(), &a.points, &index, FitnessKind::MeanDistance);
        assert_eq!(fast, mean.score);
        let fast = score_mapped(&m.mapper(), &a.points, &index, FitnessKind::MedianDistance);
        assert_eq!(fast, median.score);
    }

    #[test]
    fn lower_median_even_count() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(lower_median(&mut v), 2.0);
        let mut v = vec![5.0, 1.0, 3.0];
        assert_eq!(lower_median(&mut v), 3.0);
    }

    #[test]
    fn misaligning_a_grid_increases_the_score() {
        let target = grid(6, 1.0);
        let index = SpatialIndex::build(&target).unwrap();
        let mut previous = 0.0;
        for step in 1..=9 {
            let delta = step as f64 * 0.05;
            let m = RigidMotion::translation_only(Vector3::new(delta, 0.0, 0.0));
            let r = evaluate_motion(&m, &target, &index, FitnessKind::MeanDistance, 1.0).unwrap();
            assert!(r.score > previous);
            previous = r.score;
        }
    }

    #[test]
    fn errors() {
        let cloud = random_cloud(10, 5);
        let index = SpatialIndex::build(&cloud).unwrap();
        assert!(matches!(
            evaluate_motion(&RigidMotion::identity(), &PointCloud::default(), &index, FitnessKind::MeanDistance, 1.0),
            Err(Error::EmptyCloud)
        ));
        assert!(matches!(
            evaluate_motion(&RigidMotion::identity(), &cloud, &index, FitnessKind::MeanDistance, 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            overlap_threshold_default(&PointCloud::new(vec![Point3::origin()])),
            Err(Error::DegenerateCloud(_))
        ));
    }

    #[test]
    fn default_threshold() {
        assert_eq!(overlap_threshold_default(&grid(5, 1.0)).unwrap(), 2.0);
        let pair = PointCloud::new(vec![Point3::origin(), Point3::new(0.0, 2.5, 0.0)]);
        assert_eq!(overlap_threshold_default(&pair).unwrap(), 5.0);
        let scan = random_cloud(2000, 6);
        assert_eq!(
            overlap_threshold_default(&scan).unwrap(),
            overlap_threshold_default(&scan).unwrap()
        );
    }
}
