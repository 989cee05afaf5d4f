//! End-to-end registration: downsample, index, coarse stage, fine stage,
//! then a final full-resolution evaluation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{evaluate_motion, overlap_threshold_default, FitnessKind, FitnessReport};
use crate::ga::{
    coarse_ga, fine_ga, init_coarse_population, FitnessTrace, GaConfig, Problem, SearchMode,
};
use crate::geometry::{downsample, EulerAngles, PointCloud, RigidMotion};
use crate::spatial::SpatialIndex;

pub const DEFAULT_DOWNSAMPLE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub fitness: FitnessKind,
    /// Points kept per cloud for the optimizer.
    pub downsample: usize,
    /// Overlap distance in mm; derived from the target spacing when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_threshold: Option<f64>,
    pub ga: GaConfig,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            fitness: FitnessKind::MeanDistance,
            downsample: DEFAULT_DOWNSAMPLE,
            overlap_threshold: None,
            ga: GaConfig::default(),
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        if self.downsample == 0 {
            return Err(Error::InvalidConfig("downsample must be at least 1".into()));
        }
        if let Some(t) = self.overlap_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "overlap threshold must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitnessSummary {
    pub kind: FitnessKind,
    pub score: f64,
    pub overlap_percent: f64,
    pub overlap_threshold: f64,
    /// Source points that contributed.
    pub points: usize,
}

impl From<&FitnessReport> for FitnessSummary {
    fn from(r: &FitnessReport) -> Self {
        Self {
            kind: r.kind,
            score: r.score,
            overlap_percent: r.overlap_percent,
            overlap_threshold: r.overlap_threshold,
            points: r.per_point_distances.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationsUsed {
    pub coarse: usize,
    pub fine: usize,
    pub total: usize,
}

/// Wall-clock measurements; never part of the deterministic payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub wall_time_s: f64,
    pub coarse_s: f64,
    pub fine_s: f64,
}

impl Timing {
    pub fn is_zero(&self) -> bool {
        *self == Timing::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationResult {
    pub seed: u64,
    pub mode: SearchMode,
    pub motion: RigidMotion,
    pub fitness: FitnessSummary,
    pub generations: GenerationsUsed,
    pub config: RegistrationConfig,
    #[serde(default, skip_serializing_if = "Timing::is_zero")]
    pub timing: Timing,
}

/// A finished run: the reportable result plus per-stage traces and the
/// full-resolution per-point evaluation.
#[derive(Debug, Clone)]
pub struct Registration {
    pub result: RegistrationResult,
    pub coarse_trace: FitnessTrace,
    pub fine_trace: FitnessTrace,
    pub report: FitnessReport,
}

/// Registers `source` onto `target`.
///
/// One random stream seeded from `config.ga.seed` drives the whole run: two
/// draws for the downsampling seeds (source, then target), then the coarse
/// initialization, coarse stage and fine stage in that order.
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    mode: SearchMode,
    config: &RegistrationConfig,
) -> Result<Registration> {
    source.require_non_empty()?;
    target.require_non_empty()?;
    config.validate()?;
    let mode = match mode {
        SearchMode::ReducedTranslationOnly(a) => {
            SearchMode::ReducedTranslationOnly(EulerAngles::new(a.alpha, a.beta, a.psi))
        }
        full => full,
    };
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.ga.seed);
    let source_seed: u64 = rng.random();
    let target_seed: u64 = rng.random();
    let small_source = downsample(source, config.downsample, source_seed)?;
    let small_target = downsample(target, config.downsample, target_seed)?;
    let index = SpatialIndex::build(&small_target)?;
    let problem = Problem::new(
        &small_source,
        &small_target,
        &index,
        mode,
        config.fitness,
        &config.ga,
    )?;

    let initial = init_coarse_population(&small_source, &small_target, mode, &config.ga, &mut rng)?;
    let (coarse, coarse_trace) = coarse_ga(initial, &problem, &config.ga, &mut rng)?;
    let coarse_s = started.elapsed().as_secs_f64();
    let (best, fine_trace) = fine_ga(&coarse, &problem, &config.ga, &mut rng)?;
    let fine_s = started.elapsed().as_secs_f64() - coarse_s;

    let motion = best.motion();
    let full_index = SpatialIndex::build(target)?;
    let threshold = match config.overlap_threshold {
        Some(t) => t,
        None => overlap_threshold_default(target)?,
    };
    let report = evaluate_motion(&motion, source, &full_index, config.fitness, threshold)?;
    let generations = GenerationsUsed {
        coarse: coarse_trace.generations(),
        fine: fine_trace.generations(),
        total: coarse_trace.generations() + fine_trace.generations(),
    };
    let result = RegistrationResult {
        seed: config.ga.seed,
        mode,
        motion,
        fitness: FitnessSummary::from(&report),
        generations,
        config: config.clone(),
        timing: Timing {
            wall_time_s: started.elapsed().as_secs_f64(),
            coarse_s,
            fine_s,
        },
    };
    Ok(Registration {
        result,
        coarse_trace,
        fine_trace,
        report,
    })
}
