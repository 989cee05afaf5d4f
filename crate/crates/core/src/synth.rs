//! Synthetic scan pairs with exactly known motions, and seeded trials that
//! compare the full and known-rotation search modes on them.
//!
//! Surfaces are sampled over an `extent x extent` footprint in the x/y
//! plane. A pair is carved from one surface sample as two perpendicular
//! strips through the middle of the footprint: the source keeps a horizontal
//! strip (`|y - c| <= w/2`), the target a vertical one (`|x - c| <= w/2`),
//! with `w = overlap_fraction * extent`. Each strip therefore shares the
//! fraction `overlap_fraction` of its footprint with the other, and the parts
//! that do not overlap sit symmetrically on both sides of the shared square.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::lower_median;
use crate::ga::SearchMode;
use crate::geometry::{
    angle_distance, bounding_box, rotation_angle_between, EulerAngles, Point3, PointCloud,
    RigidMotion,
};
use crate::pipeline::{register, RegistrationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceShape {
    /// `z = 0.1 * extent * sin(2 pi x / extent) * cos(2 pi y / extent)`.
    WavySheet,
    /// Upper hemisphere of radius `extent / 2` centered over the footprint.
    SpherePatch,
    /// Three faces of the cube `[0, extent]^3`: `z = extent`, `x = 0`, `y = 0`.
    Box,
}

impl std::str::FromStr for SurfaceShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wavy-sheet" | "wavy_sheet" => Ok(SurfaceShape::WavySheet),
            "sphere-patch" | "sphere_patch" => Ok(SurfaceShape::SpherePatch),
            "box" => Ok(SurfaceShape::Box),
            other => Err(Error::InvalidConfig(format!("unknown surface shape `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub shape: SurfaceShape,
    /// Side of the sampled footprint, mm.
    pub extent: f64,
    pub point_count: usize,
    pub seed: u64,
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.point_count < 100 {
            return Err(Error::InvalidConfig(format!(
                "surface needs at least 100 points, got {}",
                self.point_count
            )));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "surface extent must be positive, got {}",
                self.extent
            )));
        }
        Ok(())
    }

    pub fn wavy_height(&self, x: f64, y: f64) -> f64 {
        let e = self.extent;
        0.1 * e * (2.0 * PI * x / e).sin() * (2.0 * PI * y / e).cos()
    }

    pub fn sphere_center(&self) -> Point3 {
        Point3::new(self.extent / 2.0, self.extent / 2.0, 0.0)
    }
}

pub fn generate_surface(spec: &SurfaceSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = spec.extent;
    let points = (0..spec.point_count)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            match spec.shape {
                SurfaceShape::WavySheet => {
                    let (x, y) = (u * e, v * e);
                    Point3::new(x, y, spec.wavy_height(x, y))
                }
                SurfaceShape::SpherePatch => {
                    // Uniform in z gives uniform area on the sphere.
                    let r = e / 2.0;
                    let phi = 2.0 * PI * v;
                    let ring = (1.0 - u * u).sqrt();
                    spec.sphere_center() + Vector3::new(ring * phi.cos(), ring * phi.sin(), u) * r
                }
                SurfaceShape::Box => {
                    let face = rng.random_range(0..3);
                    let (a, b) = (u * e, v * e);
                    match face {
                        0 => Point3::new(a, b, e),
                        1 => Point3::new(0.0, a, b),
                        _ => Point3::new(a, 0.0, b),
                    }
                }
            }
        })
        .collect();
    Ok(PointCloud::with_id(points, format!("{:?}-{}", spec.shape, spec.seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub surface: SurfaceSpec,
    /// Maps source coordinates onto target coordinates.
    pub motion: RigidMotion,
    pub overlap_fraction: f64,
    /// Standard deviation of the isotropic Gaussian noise, mm.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PairSpec {
    /// The default benchmark pair: a 300 mm wavy sheet sampled so each view
    /// keeps about 2000 points, half overlap, noise of 0.2% of the scene
    /// diagonal, a 57 degree rotation about y and a translation of 30% of
    /// the diagonal.
    pub fn benchmark(seed: u64) -> Result<Self> {
        let surface = SurfaceSpec {
            shape: SurfaceShape::WavySheet,
            extent: 300.0,
            point_count: 4000,
            seed,
        };
        let diagonal = bounding_box(&generate_surface(&surface)?)?.diagonal();
        let direction = Vector3::new(196.0, 9.0, -318.0).normalize();
        Ok(Self {
            surface,
            motion: RigidMotion::new(EulerAngles::new(0.0, 57.0, 3.0), direction * 0.3 * diagonal),
            overlap_fraction: 0.5,
            noise_sigma: 0.002 * diagonal,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.surface.validate()?;
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "overlap fraction must lie in (0, 1], got {}",
                self.overlap_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Same construction with every seed advanced by `offset`.
    pub fn reseeded(&self, offset: u64) -> Self {
        let mut spec = *self;
        spec.seed = self.seed.wrapping_add(offset);
        spec.surface.seed = self.surface.seed.wrapping_add(offset);
        spec
    }

    fn half_width(&self) -> f64 {
        self.overlap_fraction * self.surface.extent / 2.0
    }

    /// Whether a pre-motion point lies in the source strip.
    pub fn in_source_window(&self, p: &Point3) -> bool {
        (p.y - self.surface.extent / 2.0).abs() <= self.half_width()
    }

    /// Whether a pre-motion point lies in the target strip.
    pub fn in_target_window(&self, p: &Point3) -> bool {
        (p.x - self.surface.extent / 2.0).abs() <= self.half_width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub ground_truth: RigidMotion,
}

/// Carves the two views, adds independent noise to each (source first), and
/// moves the target view by the ground-truth motion.
pub fn make_pair(spec: &PairSpec) -> Result<ScanPair> {
    spec.validate()?;
    let surface = generate_surface(&spec.surface)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
    let mut jitter = |p: &Point3| -> Point3 {
        if spec.noise_sigma == 0.0 {
            *p
        } else {
            p + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
        }
    };
    let source: Vec<Point3> = surface
        .iter()
        .filter(|p| spec.in_source_window(p))
        .map(&mut jitter)
        .collect();
    let mapper = spec.motion.mapper();
    let target: Vec<Point3> = surface
        .iter()
        .filter(|p| spec.in_target_window(p))
        .map(|p| mapper.apply(&jitter(p)))
        .collect();
    Ok(ScanPair {
        source: PointCloud::with_id(source, "synthetic-source"),
        target: PointCloud::with_id(target, "synthetic-target"),
        ground_truth: spec.motion,
    })
}

/// Which search a trial runs. Known-rotation trials take the rotation from
/// the pair's ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    Full,
    Reduced,
}

impl TrialMode {
    pub fn label(self) -> &'static str {
        match self {
            TrialMode::Full => "full",
            TrialMode::Reduced => "reduced",
        }
    }

    pub fn search_mode(self, ground_truth: &RigidMotion) -> SearchMode {
        match self {
            TrialMode::Full => SearchMode::Full6Dof,
            TrialMode::Reduced => SearchMode::ReducedTranslationOnly(ground_truth.rotation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionError {
    /// Absolute per-axis translation error, mm.
    pub translation: [f64; 3],
    pub translation_norm: f64,
    /// Absolute per-angle Euler differences, degrees.
    pub euler: [f64; 3],
    /// Angle of the relative rotation between truth and estimate, degrees.
    pub rotation_deg: f64,
}

pub fn motion_error(estimate: &RigidMotion, truth: &RigidMotion) -> MotionError {
    let dt = estimate.translation - truth.translation;
    let (e, t) = (estimate.rotation, truth.rotation);
    MotionError {
        translation: [dt.x.abs(), dt.y.abs(), dt.z.abs()],
        translation_norm: dt.norm(),
        euler: [
            angle_distance(e.alpha, t.alpha),
            angle_distance(e.beta, t.beta),
            angle_distance(e.psi, t.psi),
        ],
        rotation_deg: rotation_angle_between(&truth.rotation_matrix(), &estimate.rotation_matrix()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub mode: TrialMode,
    pub seed: u64,
    pub error: MotionError,
    pub fitness_final: f64,
    pub generations_used: usize,
    pub wall_time_s: f64,
    pub estimate: RigidMotion,
    pub ground_truth: RigidMotion,
}

/// Runs every mode on `repeats` pairs. Repeat `r` uses the pair reseeded by
/// `r` and the optimizer seed `config.ga.seed + r`. Trials run one after
/// another so that their wall times are comparable.
pub fn run_trials(
    pair: &PairSpec,
    modes: &[TrialMode],
    config: &RegistrationConfig,
    repeats: usize,
) -> Result<Vec<TrialOutcome>> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let mut outcomes = Vec::with_capacity(repeats * modes.len());
    for r in 0..repeats as u64 {
        let scan = make_pair(&pair.reseeded(r))?;
        let mut trial_config = config.clone();
        trial_config.ga.seed = config.ga.seed.wrapping_add(r);
        for &mode in modes {
            let run = register(
                &scan.source,
                &scan.target,
                mode.search_mode(&scan.ground_truth),
                &trial_config,
            )?;
            outcomes.push(TrialOutcome {
                mode,
                seed: trial_config.ga.seed,
                error: motion_error(&run.result.motion, &scan.ground_truth),
                fitness_final: run.result.fitness.score,
                generations_used: run.result.generations.total,
                wall_time_s: run.result.timing.wall_time_s,
                estimate: run.result.motion,
                ground_truth: scan.ground_truth,
            });
        }
    }
    Ok(outcomes)
}

pub const TRIAL_CSV_HEADER: &str =
    "mode,seed,tx_err,ty_err,tz_err,t_err_norm,rot_err_deg,fitness,generations,seconds";

pub fn trials_to_csv(outcomes: &[TrialOutcome]) -> String {
    let mut out = String::from(TRIAL_CSV_HEADER);
    out.push('\n');
    for o in outcomes {
        let e = &o.error;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            o.mode.label(),
            o.seed,
            e.translation[0],
            e.translation[1],
            e.translation[2],
            e.translation_norm,
            e.rotation_deg,
            o.fitness_final,
            o.generations_used,
            o.wall_time_s
        )
        .expect("writing to a String");
    }
    out
}

/// One mode's aggregate over its trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: TrialMode,
    pub trials: usize,
    /// Mean absolute translation error per axis, mm.
    pub translation_deviation: [f64; 3],
    /// Mean absolute Euler-angle error, degrees; `None` when the rotation was known.
    pub angle_deviation: Option<[f64; 3]>,
    pub median_translation_error: f64,
    pub median_generations: usize,
    pub median_wall_time_s: f64,
}

/// Per-mode aggregates, in the order modes first appear.
pub fn summarize(outcomes: &[TrialOutcome]) -> Vec<SummaryRow> {
    let mut modes: Vec<TrialMode> = Vec::new();
    for o in outcomes {
        if !modes.contains(&o.mode) {
            modes.push(o.mode);
        }
    }
    modes
        .into_iter()
        .map(|mode| {
            let rows: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.mode == mode).collect();
            let n = rows.len() as f64;
            let mean_of = |f: &dyn Fn(&TrialOutcome) -> f64| rows.iter().map(|o| f(o)).sum::<f64>() / n;
            let median_of = |f: &dyn Fn(&TrialOutcome) -> f64| {
                let mut v: Vec<f64> = rows.iter().map(|o| f(o)).collect();
                lower_median(&mut v)
            };
            SummaryRow {
                mode,
                trials: rows.len(),
                translation_deviation: [0, 1, 2].map(|i| mean_of(&|o| o.error.translation[i])),
                angle_deviation: (mode == TrialMode::Full)
                    .then(|| [0, 1, 2].map(|i| mean_of(&|o| o.error.euler[i]))),
                median_translation_error: median_of(&|o| o.error.translation_norm),
                median_generations: median_of(&|o| o.generations_used as f64) as usize,
                median_wall_time_s: median_of(&|o| o.wall_time_s),
            }
        })
        .collect()
}

/// Fixed-width table with one row per mode: mean per-axis deviations and
/// median time.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<8} {:>6} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>12} {:>11} {:>10}\n",
        "mode", "trials", "x/mm", "y/mm", "z/mm", "alpha", "beta", "psi", "t_err_med", "generations", "time/s"
    );
    for r in rows {
        let angles = match r.angle_deviation {
            Some(a) => a.map(|v| format!("{v:.3}")),
            None => ["known".to_string(), "known".to_string(), "known".to_string()],
        };
        writeln!(
            out,
            "{:<8} {:>6} {:>10.3} {:>10.3} {:>10.3} {:>8} {:>8} {:>8} {:>12.3} {:>11} {:>10.3}",
            r.mode.label(),
            r.trials,
            r.translation_deviation[0],
            r.translation_deviation[1],
            r.translation_deviation[2],
            angles[0],
            angles[1],
            angles[2],
            r.median_translation_error,
            r.median_generations,
            r.median_wall_time_s
        )
        .expect("writing to a String");
    }
    out
}
