//! Two-stage genetic registration.
//!
//! A coarse stage seeds its population from random anchor correspondences
//! and evolves it for a fixed number of generations; the fine stage inherits
//! the best of that population and keeps evolving under a mutation schedule
//! that raises the per-gene probability while shrinking the step size.
//!
//! Both stages work either on all six motion parameters or, when the rotation
//! is known in advance, on the three translation components only.
//!
//! All randomness comes from one caller-owned stream, consumed by a single
//! sequencer in a fixed order; only fitness evaluation runs in parallel.

mod operators;
mod stages;

pub use operators::{crossover, crossover_at, init_coarse_population, mutate, mutation_schedule};
pub use stages::{coarse_ga, fine_ga};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::FitnessKind;
use crate::geometry::{
    bounding_box, centroid, normalize_degrees, Aabb, EulerAngles, Point3,
    PointCloud, RigidMotion,
};
use crate::spatial::SpatialIndex;

/// Gene layout: `[tx, ty, tz, alpha, beta, psi]`.
pub const GENE_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SearchMode {
    #[serde(rename = "full")]
    Full6Dof,
    /// Rotation supplied from outside; only translation is searched.
    #[serde(rename = "reduced")]
    ReducedTranslationOnly(EulerAngles),
}

impl SearchMode {
    /// Number of leading genes the optimizer may change.
    pub fn free_genes(&self) -> usize {
        match self {
            SearchMode::Full6Dof => 6,
            SearchMode::ReducedTranslationOnly(_) => 3,
        }
    }

    pub fn is_reduced(&self) -> bool {
        matches!(self, SearchMode::ReducedTranslationOnly(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            SearchMode::Full6Dof => "full",
            SearchMode::ReducedTranslationOnly(_) => "reduced",
        }
    }
}

/// How an individual entered its population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Initial,
    Elite,
    Crossover,
    MutationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromosome {
    pub genes: [f64; GENE_COUNT],
    /// Fitness in mm; `None` until evaluated.
    pub fitness: Option<f64>,
    pub origin: Origin,
}

impl Chromosome {
    pub fn new(translation: Vector3<f64>, angles: EulerAngles) -> Self {
        Self {
            genes: [
                translation.x,
                translation.y,
                translation.z,
                angles.alpha,
                angles.beta,
                angles.psi,
            ],
            fitness: None,
            origin: Origin::Initial,
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.genes[0], self.genes[1], self.genes[2])
    }

    pub fn angles(&self) -> EulerAngles {
        EulerAngles {
            alpha: self.genes[3],
            beta: self.genes[4],
            psi: self.genes[5],
        }
    }

    pub fn motion(&self) -> RigidMotion {
        RigidMotion::new(self.angles(), self.translation())
    }

    /// Fitness, treating unevaluated individuals as worst.
    pub fn fitness_or_inf(&self) -> f64 {
        self.fitness.unwrap_or(f64::INFINITY)
    }

    pub(crate) fn normalize_angles(&mut self) {
        for g in &mut self.genes[3..] {
            *g = normalize_degrees(*g);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub coarse_population: usize,
    pub coarse_generations: usize,
    pub fine_population: usize,
    pub fine_generations: usize,
    pub coarse_mutation_prob: f64,
    pub fine_mutation_prob_initial: f64,
    pub schedule_period: usize,
    pub schedule_prob_increment: f64,
    pub schedule_step_decay: f64,
    pub elite_count: usize,
    pub fine_crossover_offspring: usize,
    pub fine_mutation_only_offspring: usize,
    pub stagnation_window: usize,
    pub stagnation_epsilon: f64,
    /// Initial translation step as a fraction of the target bounding-box diagonal.
    pub translation_step_fraction: f64,
    /// Initial angle step, degrees.
    pub angle_step: f64,
    /// Allowed region for the moved source centroid: the target bounding box
    /// grown by this fraction of its extent on every side.
    pub bounds_dilation: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            coarse_population: 100,
            coarse_generations: 250,
            fine_population: 50,
            fine_generations: 250,
            coarse_mutation_prob: 0.16,
            fine_mutation_prob_initial: 0.20,
            schedule_period: 25,
            schedule_prob_increment: 0.05,
            schedule_step_decay: 0.8,
            elite_count: 2,
            fine_crossover_offspring: 44,
            fine_mutation_only_offspring: 4,
            stagnation_window: 40,
            stagnation_epsilon: 1e-3,
            translation_step_fraction: 0.1,
            angle_step: 10.0,
            bounds_dilation: 0.5,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, p) in [
            ("coarse_mutation_prob", self.coarse_mutation_prob),
            ("fine_mutation_prob_initial", self.fine_mutation_prob_initial),
            ("schedule_prob_increment", self.schedule_prob_increment),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, n) in [
            ("coarse_population", self.coarse_population),
            ("coarse_generations", self.coarse_generations),
            ("fine_population", self.fine_population),
            ("fine_generations", self.fine_generations),
            ("schedule_period", self.schedule_period),
            ("elite_count", self.elite_count),
            ("stagnation_window", self.stagnation_window),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        let parts = self.elite_count + self.fine_crossover_offspring + self.fine_mutation_only_offspring;
        if parts != self.fine_population {
            return bad(format!(
                "elite_count + fine_crossover_offspring + fine_mutation_only_offspring = {parts}, \
                 expected fine_population = {}",
                self.fine_population
            ));
        }
        if self.elite_count >= self.coarse_population {
            return bad("elite_count must be smaller than coarse_population".into());
        }
        if !(self.schedule_step_decay > 0.0 && self.schedule_step_decay <= 1.0) {
            return bad(format!(
                "schedule_step_decay must lie in (0, 1], got {}",
                self.schedule_step_decay
            ));
        }
        if !(self.translation_step_fraction > 0.0) || !(self.angle_step > 0.0) {
            return bad("mutation step sizes must be positive".into());
        }
        if !(self.bounds_dilation >= 0.0) || !(self.stagnation_epsilon >= 0.0) {
            return bad("bounds_dilation and stagnation_epsilon must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub individuals: Vec<Chromosome>,
    pub generation: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn best(&self) -> Option<&Chromosome> {
        self.individuals
            .iter()
            .min_by(|a, b| a.fitness_or_inf().total_cmp(&b.fitness_or_inf()))
    }

    pub fn composition(&self) -> Composition {
        let mut c = Composition::default();
        for ind in &self.individuals {
            match ind.origin {
                Origin::Initial => c.initial += 1,
                Origin::Elite => c.elites += 1,
                Origin::Crossover => c.crossover += 1,
                Origin::MutationOnly => c.mutation_only += 1,
            }
        }
        c
    }

    /// Stable sort by fitness, best first.
    pub(crate) fn sort(&mut self) {
        self.individuals
            .sort_by(|a, b| a.fitness_or_inf().total_cmp(&b.fitness_or_inf()));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Composition {
    pub initial: usize,
    pub elites: usize,
    pub crossover: usize,
    pub mutation_only: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub generation: usize,
    pub best_fitness: f64,
    pub best: Chromosome,
    pub composition: Composition,
}

/// Best individual per generation; entry 0 is the starting population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitnessTrace {
    pub entries: Vec<TraceEntry>,
}

impl FitnessTrace {
    /// Generations actually bred (the starting population is not counted).
    pub fn generations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn best_fitness(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.best_fitness)
    }

    pub(crate) fn record(&mut self, population: &Population) {
        let best = *population.best().expect("population is never empty");
        self.entries.push(TraceEntry {
            generation: population.generation,
            best_fitness: best.fitness_or_inf(),
            best,
            composition: population.composition(),
        });
    }
}

/// Everything the optimizer needs to score and constrain candidates.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub source: &'a [Point3],
    pub target_index: &'a SpatialIndex,
    pub mode: SearchMode,
    pub kind: FitnessKind,
    pub space: GeneSpace,
}

impl<'a> Problem<'a> {
    pub fn new(
        source: &'a PointCloud,
        target: &PointCloud,
        target_index: &'a SpatialIndex,
        mode: SearchMode,
        kind: FitnessKind,
        config: &GaConfig,
    ) -> Result<Self> {
        Ok(Self {
            source: &source.points,
            target_index,
            mode,
            kind,
            space: GeneSpace::new(source, target, config)?,
        })
    }

    pub fn score(&self, c: &Chromosome) -> f64 {
        let mapper = c.motion().mapper();
        crate::fitness::score_mapped(&mapper, self.source, self.target_index, self.kind)
    }
}

/// Step sizes and translation limits for a source/target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneSpace {
    /// Unscheduled maximum mutation step per gene.
    pub base_steps: [f64; GENE_COUNT],
    /// Region the moved source centroid must stay inside.
    pub centroid_bounds: Aabb,
    pub source_centroid: Point3,
}

impl GeneSpace {
    pub fn new(source: &PointCloud, target: &PointCloud, config: &GaConfig) -> Result<Self> {
        let target_box = bounding_box(target)?;
        let source_centroid = centroid(source)?;
        // A single-point target would give a zero step; fall back to the source extent.
        let mut scale = target_box.diagonal();
        if scale == 0.0 {
            scale = bounding_box(source)?.diagonal();
        }
        if scale == 0.0 {
            scale = 1.0;
        }
        let t = config.translation_step_fraction * scale;
        let a = config.angle_step;
        Ok(Self {
            base_steps: [t, t, t, a, a, a],
            centroid_bounds: target_box.dilated(config.bounds_dilation),
            source_centroid,
        })
    }

    pub fn scaled_steps(&self, scale: f64) -> [f64; GENE_COUNT] {
        self.base_steps.map(|s| s * scale)
    }

    /// Clamps translation genes so the moved source centroid stays in bounds.
    pub fn clamp(&self, c: &mut Chromosome) {
        let rc = c.angles().to_matrix() * self.source_centroid.coords;
        for i in 0..3 {
            let lo = self.centroid_bounds.min[i] - rc[i];
            let hi = self.centroid_bounds.max[i] - rc[i];
            c.genes[i] = c.genes[i].clamp(lo, hi);
        }
    }
}
