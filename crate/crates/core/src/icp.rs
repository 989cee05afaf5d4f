//! Ground-truth tooling: closed-form rigid fit from point correspondences and
//! point-to-point ICP refinement.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidMotion};
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondencePair {
    pub source_point: Point3,
    pub target_point: Point3,
}

impl CorrespondencePair {
    pub fn new(source_point: Point3, target_point: Point3) -> Self {
        Self {
            source_point,
            target_point,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the RMS improves by less than this, mm.
    pub convergence_epsilon: f64,
    /// Ignore correspondences farther apart than this, mm.
    pub correspondence_cutoff: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_epsilon: 1e-4,
            correspondence_cutoff: None,
        }
    }
}

/// Rotation matrix and translation of a least-squares rigid fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidFit {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidFit {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_motion(m: &RigidMotion) -> Self {
        Self {
            rotation: m.rotation_matrix(),
            translation: m.translation,
        }
    }

    pub fn to_motion(&self) -> RigidMotion {
        RigidMotion::from_matrix(&self.rotation, self.translation)
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }
}

/// Least-squares rigid motion taking `source[i]` onto `target[i]`.
///
/// Cross-covariance of the centered sets, SVD, and a determinant sign
/// correction so the result is always a proper rotation.
pub fn fit_rigid_points(source: &[Point3], target: &[Point3]) -> Result<RigidFit> {
    assert_eq!(source.len(), target.len());
    if source.len() < 3 {
        return Err(Error::TooFewPairs {
            got: source.len(),
            need: 3,
        });
    }
    let n = source.len() as f64;
    let mu_s = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mu_t = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;

    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let sc = s.coords - mu_s;
        let tc = t.coords - mu_t;
        scatter += sc * sc.transpose();
        cross += sc * tc.transpose();
    }

    // Collinear or coincident sources leave the rotation about their line free.
    let mut eig = SymmetricEigen::new(scatter).eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if eig[0] <= 0.0 || eig[1] <= 1e-12 * eig[0] {
        return Err(Error::DegenerateConfiguration(
            "source points are collinear or coincident".into(),
        ));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        correction[(2, 2)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = mu_t - rotation * mu_s;
    Ok(RigidFit {
        rotation,
        translation,
    })
}

/// Least-squares rigid motion from at least three correspondences.
pub fn fit_rigid(pairs: &[CorrespondencePair]) -> Result<RigidMotion> {
    let (source, target): (Vec<Point3>, Vec<Point3>) = pairs
        .iter()
        .map(|p| (p.source_point, p.target_point))
        .unzip();
    Ok(fit_rigid_points(&source, &target)?.to_motion())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub motion: RigidMotion,
    /// Matrix form of `motion`, without the round trip through Euler angles.
    pub fit: RigidFit,
    pub rms: f64,
    /// Accepted iterations.
    pub iterations: usize,
    /// RMS before the first iteration and after each accepted one.
    pub rms_trace: Vec<f64>,
}

struct Matches {
    source: Vec<Point3>,
    target: Vec<Point3>,
    rms: f64,
}

fn match_points(source: &PointCloud, index: &SpatialIndex, fit: &RigidFit, cutoff: Option<f64>) -> Matches {
    let mut m = Matches {
        source: Vec::with_capacity(source.len()),
        target: Vec::with_capacity(source.len()),
        rms: 0.0,
    };
    let mut sum = 0.0;
    for p in source.iter() {
        let n = index.nearest(&fit.apply(p));
        if cutoff.is_some_and(|c| n.distance > c) {
            continue;
        }
        sum += n.distance * n.distance;
        m.source.push(*p);
        m.target.push(n.point);
    }
    m.rms = if m.source.is_empty() {
        f64::INFINITY
    } else {
        (sum / m.source.len() as f64).sqrt()
    };
    m
}

/// Point-to-point ICP starting from `init`.
///
/// Each iteration re-matches every source point to its nearest target point
/// and refits. An iteration that would raise the RMS is rejected and ends the
/// run, so the reported RMS trace never increases.
pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidMotion,
    config: &IcpConfig,
) -> Result<IcpOutcome> {
    source.require_non_empty()?;
    let index = SpatialIndex::build(target)?;
    if config.max_iterations == 0 || !(config.convergence_epsilon > 0.0) {
        return Err(Error::InvalidConfig(
            "ICP needs max_iterations >= 1 and a positive convergence epsilon".into(),
        ));
    }
    let cutoff = config.correspondence_cutoff;
    let mut fit = RigidFit::from_motion(init);
    let mut current = match_points(source, &index, &fit, cutoff);
    let mut trace = vec![current.rms];
    let mut iterations = 0;
    while iterations < config.max_iterations && current.rms > 0.0 {
        let candidate = fit_rigid_points(&current.source, &current.target)?;
        let next = match_points(source, &index, &candidate, cutoff);
        if !(next.rms <= current.rms) {
            break;
        }
        let gain = current.rms - next.rms;
        fit = candidate;
        current = next;
        iterations += 1;
        trace.push(current.rms);
        if gain < config.convergence_epsilon {
            break;
        }
    }
    Ok(IcpOutcome {
        motion: fit.to_motion(),
        fit,
        rms: current.rms,
        iterations,
        rms_trace: trace,
    })
}
