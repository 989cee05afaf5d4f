use rand::Rng;

use super::{Chromosome, GaConfig, GeneSpace, Origin, Population, SearchMode, GENE_COUNT};
use crate::error::Result;
use crate::geometry::{centroid, EulerAngles, PointCloud};

/// Coarse-stage starting population.
///
/// The source point closest to the source centroid is matched with a random
/// target point per individual, and the translation is chosen so that this
/// anchor lands exactly on it. In full mode each individual starts rotated
/// about a single random axis; in reduced mode the known angles are used.
///
/// Random stream per individual: target point index, then (full mode only)
/// axis and angle.
pub fn init_coarse_population<R: Rng + ?Sized>(
    source: &PointCloud,
    target: &PointCloud,
    mode: SearchMode,
    config: &GaConfig,
    rng: &mut R,
) -> Result<Population> {
    source.require_non_empty()?;
    target.require_non_empty()?;
    let center = centroid(source)?;
    let mut anchor = source.points[0];
    let mut best = f64::INFINITY;
    for p in source.iter() {
        let d = (p - center).norm_squared();
        if d < best {
            best = d;
            anchor = *p;
        }
    }

    let individuals = (0..config.coarse_population)
        .map(|_| {
            let b = target.points[rng.random_range(0..target.len())];
            let angles = match mode {
                SearchMode::ReducedTranslationOnly(known) => known,
                SearchMode::Full6Dof => {
                    let axis = rng.random_range(0..3);
                    let angle = rng.random_range(-180.0..180.0);
                    let mut a = [0.0; 3];
                    a[axis] = angle;
                    EulerAngles::new(a[0], a[1], a[2])
                }
            };
            let t = b.coords - angles.to_matrix() * anchor.coords;
            Chromosome::new(t, angles)
        })
        .collect();
    Ok(Population {
        individuals,
        generation: 0,
    })
}

/// Two-point crossover over the free genes.
///
/// Draws two distinct cuts among the interior gene boundaries and swaps the
/// segment between them. Genes fixed by the search mode are never touched.
pub fn crossover<R: Rng + ?Sized>(
    parent_a: &Chromosome,
    parent_b: &Chromosome,
    mode: SearchMode,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let n = mode.free_genes();
    let first = rng.random_range(1..n);
    let mut second = rng.random_range(1..n - 1);
    if second >= first {
        second += 1;
    }
    crossover_at(parent_a, parent_b, first.min(second), first.max(second))
}

/// Swaps genes `[cut_lo, cut_hi)` between the parents.
pub fn crossover_at(
    parent_a: &Chromosome,
    parent_b: &Chromosome,
    cut_lo: usize,
    cut_hi: usize,
) -> (Chromosome, Chromosome) {
    assert!(cut_lo < cut_hi && cut_hi <= GENE_COUNT);
    let mut child_a = *parent_a;
    let mut child_b = *parent_b;
    child_a.genes[cut_lo..cut_hi].copy_from_slice(&parent_b.genes[cut_lo..cut_hi]);
    child_b.genes[cut_lo..cut_hi].copy_from_slice(&parent_a.genes[cut_lo..cut_hi]);
    for child in [&mut child_a, &mut child_b] {
        child.origin = Origin::Crossover;
        child.fitness = [parent_a, parent_b]
            .into_iter()
            .find(|p| p.genes == child.genes)
            .and_then(|p| p.fitness);
    }
    (child_a, child_b)
}

/// Perturbs each free gene with probability `per_gene_prob` by `±u`,
/// `u` uniform in `(0, max_step[gene]]`.
///
/// Angles are re-wrapped and, if anything changed, the translation is clamped
/// to the space's bounds. An unchanged chromosome keeps its fitness.
pub fn mutate<R: Rng + ?Sized>(
    c: &Chromosome,
    per_gene_prob: f64,
    max_step: &[f64; GENE_COUNT],
    mode: SearchMode,
    space: &GeneSpace,
    rng: &mut R,
) -> Chromosome {
    let mut out = *c;
    let mut changed = false;
    for (gene, step) in out.genes.iter_mut().zip(max_step).take(mode.free_genes()) {
        if rng.random_bool(per_gene_prob) {
            let u = step * (1.0 - rng.random::<f64>());
            if rng.random_bool(0.5) {
                *gene += u;
            } else {
                *gene -= u;
            }
            changed = true;
        }
    }
    if changed {
        out.normalize_angles();
        space.clamp(&mut out);
        out.fitness = None;
    }
    out
}

/// Fine-stage mutation probability and step scale for a generation.
pub fn mutation_schedule(generation: usize, config: &GaConfig) -> (f64, f64) {
    let periods = generation / config.schedule_period;
    let prob = (config.fine_mutation_prob_initial
        + config.schedule_prob_increment * periods as f64)
        .min(1.0);
    let scale = config.schedule_step_decay.powi(periods as i32);
    (prob, scale)
}
