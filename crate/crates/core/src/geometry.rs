//! Points, clouds, Euler-angle rigid motions and the small amount of
//! geometry the rest of the crate builds on.
//!
//! Rotations use the fixed-axis convention `R = Rz(psi) * Ry(beta) * Rx(alpha)`
//! and a motion maps a point as `p' = R * p + t`. Angles are kept in degrees.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn normalize_degrees(angle: f64) -> f64 {
    let wrapped = angle - 360.0 * ((angle + 180.0) / 360.0).floor();
    // Rounding can land exactly on the open end for inputs just below -180.
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Smallest absolute difference between two angles, in degrees.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    normalize_degrees(a - b).abs()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub source_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            source_id: String::new(),
        }
    }

    pub fn with_id(points: Vec<Point3>, source_id: impl Into<String>) -> Self {
        Self {
            points,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }
}

/// Rotation about the x, y and z axes in degrees, each in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, psi: f64) -> Self {
        Self {
            alpha: normalize_degrees(alpha),
            beta: normalize_degrees(beta),
            psi: normalize_degrees(psi),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.psi]
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        euler_to_matrix(self)
    }
}

/// `Rz(psi) * Ry(beta) * Rx(alpha)`.
pub fn euler_to_matrix(angles: &EulerAngles) -> Matrix3<f64> {
    let (sa, ca) = angles.alpha.to_radians().sin_cos();
    let (sb, cb) = angles.beta.to_radians().sin_cos();
    let (sp, cp) = angles.psi.to_radians().sin_cos();
    Matrix3::new(
        cp * cb,
        cp * sb * sa - sp * ca,
        cp * sb * ca + sp * sa,
        sp * cb,
        sp * sb * sa + cp * ca,
        sp * sb * ca - cp * sa,
        -sb,
        cb * sa,
        cb * ca,
    )
}

/// Inverse of [`euler_to_matrix`] for proper rotations.
///
/// `beta` is taken in `[-90, 90]`. At gimbal lock (`|cos beta| < 1e-9`) the
/// x rotation is set to zero and the remaining freedom is folded into `psi`.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> EulerAngles {
    let sb = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    if beta.cos().abs() < 1e-9 {
        let psi = (-r[(0, 1)]).atan2(r[(1, 1)]);
        EulerAngles::new(0.0, beta.to_degrees(), psi.to_degrees())
    } else {
        let alpha = r[(2, 1)].atan2(r[(2, 2)]);
        let psi = r[(1, 0)].atan2(r[(0, 0)]);
        EulerAngles::new(alpha.to_degrees(), beta.to_degrees(), psi.to_degrees())
    }
}

/// Geodesic angle in degrees between two rotation matrices.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

/// Rotation followed by translation, in degrees and millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "MotionRecord", into = "MotionRecord")]
pub struct RigidMotion {
    pub rotation: EulerAngles,
    pub translation: Vector3<f64>,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn new(rotation: EulerAngles, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: EulerAngles::zero(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation_only(t: Vector3<f64>) -> Self {
        Self::new(EulerAngles::zero(), t)
    }

    pub fn from_matrix(r: &Matrix3<f64>, t: Vector3<f64>) -> Self {
        Self::new(matrix_to_euler(r), t)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        euler_to_matrix(&self.rotation)
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.mapper().apply(p)
    }

    /// Precomputes the rotation matrix for repeated application.
    pub fn mapper(&self) -> MotionMapper {
        MotionMapper {
            rotation: self.rotation_matrix(),
            translation: self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        Self::from_matrix(&rt, -(rt * self.translation))
    }

    /// The motion that applies `self` first and `next` second.
    pub fn then(&self, next: &RigidMotion) -> Self {
        let r1 = self.rotation_matrix();
        let r2 = next.rotation_matrix();
        Self::from_matrix(&(r2 * r1), r2 * self.translation + next.translation)
    }
}

/// Flat `x y z alpha beta psi` layout used in reports.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionRecord {
    x: f64,
    y: f64,
    z: f64,
    alpha: f64,
    beta: f64,
    psi: f64,
}

impl From<MotionRecord> for RigidMotion {
    fn from(r: MotionRecord) -> Self {
        RigidMotion::new(
            EulerAngles::new(r.alpha, r.beta, r.psi),
            Vector3::new(r.x, r.y, r.z),
        )
    }
}

impl From<RigidMotion> for MotionRecord {
    fn from(m: RigidMotion) -> Self {
        MotionRecord {
            x: m.translation.x,
            y: m.translation.y,
            z: m.translation.z,
            alpha: m.rotation.alpha,
            beta: m.rotation.beta,
            psi: m.rotation.psi,
        }
    }
}

/// A rigid motion with its rotation matrix already evaluated.
#[derive(Debug, Clone, Copy)]
pub struct MotionMapper {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl MotionMapper {
    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }
}

pub fn inverse(motion: &RigidMotion) -> RigidMotion {
    motion.inverse()
}

pub fn apply_motion(motion: &RigidMotion, cloud: &PointCloud) -> Result<PointCloud> {
    cloud.require_non_empty()?;
    let mapper = motion.mapper();
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| mapper.apply(p)).collect(),
        source_id: cloud.source_id.clone(),
    })
}

pub fn centroid(cloud: &PointCloud) -> Result<Point3> {
    cloud.require_non_empty()?;
    let sum = cloud
        .points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Ok(Point3::from(sum / cloud.len() as f64))
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Grows every side by `fraction` of the box extent along that axis.
    pub fn dilated(&self, fraction: f64) -> Aabb {
        let pad = self.extent() * fraction;
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }
}

pub fn bounding_box(cloud: &PointCloud) -> Result<Aabb> {
    cloud.require_non_empty()?;
    let first = cloud.points[0];
    let (min, max) = cloud
        .points
        .iter()
        .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    Ok(Aabb { min, max })
}

/// Uniform random subset of `target_count` points, kept in input order.
///
/// Clouds no larger than `target_count` are returned unchanged.
pub fn downsample(cloud: &PointCloud, target_count: usize, seed: u64) -> Result<PointCloud> {
    cloud.require_non_empty()?;
    if target_count == 0 {
        return Err(Error::InvalidConfig(
            "downsample target count must be at least 1".into(),
        ));
    }
    if cloud.len() <= target_count {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, cloud.len(), target_count).into_vec();
    picked.sort_unstable();
    Ok(PointCloud {
        points: picked.into_iter().map(|i| cloud.points[i]).collect(),
        source_id: cloud.source_id.clone(),
    })
}
