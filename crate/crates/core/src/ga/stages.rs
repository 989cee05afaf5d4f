use rand::Rng;
use rayon::prelude::*;

use super::{
    crossover, mutate, mutation_schedule, Chromosome, FitnessTrace, GaConfig, Origin, Population,
    Problem,
};
use crate::error::{Error, Result};

/// Scores every unevaluated individual. Evaluations are independent, so the
/// result does not depend on the number of worker threads.
fn evaluate(population: &mut Population, problem: &Problem<'_>) {
    population
        .individuals
        .par_iter_mut()
        .filter(|c| c.fitness.is_none())
        .for_each(|c| c.fitness = Some(problem.score(c)));
}

/// Rank selection on a population sorted best first: rank `r` is drawn with
/// weight `n - r`.
fn select_rank<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let total = n * (n + 1) / 2;
    let mut ticket = rng.random_range(0..total);
    for rank in 0..n {
        let weight = n - rank;
        if ticket < weight {
            return rank;
        }
        ticket -= weight;
    }
    unreachable!("ticket below total weight")
}

fn elites(population: &Population, count: usize) -> impl Iterator<Item = Chromosome> + '_ {
    population.individuals.iter().take(count).map(|c| Chromosome {
        origin: Origin::Elite,
        ..*c
    })
}

/// Appends up to `count` crossover-then-mutation offspring.
///
/// Per pair the stream is consumed as: parent a, parent b, crossover cuts,
/// mutation of the first child, mutation of the second child.
fn breed<R: Rng + ?Sized>(
    current: &Population,
    count: usize,
    prob: f64,
    steps: &[f64; super::GENE_COUNT],
    problem: &Problem<'_>,
    rng: &mut R,
    next: &mut Vec<Chromosome>,
) {
    let n = current.len();
    let mut produced = 0;
    while produced < count {
        let a = &current.individuals[select_rank(n, rng)];
        let b = &current.individuals[select_rank(n, rng)];
        let (c1, c2) = crossover(a, b, problem.mode, rng);
        for child in [c1, c2] {
            let mut m = mutate(&child, prob, steps, problem.mode, &problem.space, rng);
            m.origin = Origin::Crossover;
            if produced < count {
                next.push(m);
                produced += 1;
            }
        }
    }
}

/// Coarse stage: a fixed number of generations with elitism and a constant
/// mutation probability and step.
///
/// Returns the final population sorted best first.
pub fn coarse_ga<R: Rng + ?Sized>(
    initial: Population,
    problem: &Problem<'_>,
    config: &GaConfig,
    rng: &mut R,
) -> Result<(Population, FitnessTrace)> {
    if initial.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut population = initial;
    evaluate(&mut population, problem);
    population.sort();
    let mut trace = FitnessTrace::default();
    trace.record(&population);

    let size = population.len();
    let elite_count = config.elite_count.min(size);
    let steps = problem.space.base_steps;
    for generation in 1..=config.coarse_generations {
        let mut next: Vec<Chromosome> = elites(&population, elite_count).collect();
        breed(
            &population,
            size - elite_count,
            config.coarse_mutation_prob,
            &steps,
            problem,
            rng,
            &mut next,
        );
        population = Population {
            individuals: next,
            generation,
        };
        evaluate(&mut population, problem);
        population.sort();
        trace.record(&population);
    }
    Ok((population, trace))
}

/// Fine stage: inherits the best individuals of `initial` and evolves them
/// with elites, crossover offspring and mutation-only offspring under
/// [`mutation_schedule`], stopping early once the best fitness stagnates.
///
/// Returns the best chromosome seen.
pub fn fine_ga<R: Rng + ?Sized>(
    initial: &Population,
    problem: &Problem<'_>,
    config: &GaConfig,
    rng: &mut R,
) -> Result<(Chromosome, FitnessTrace)> {
    if initial.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut inherited = initial.clone();
    evaluate(&mut inherited, problem);
    inherited.sort();
    // Too small an inherited population is topped up by repeating it.
    let individuals = inherited
        .individuals
        .iter()
        .cycle()
        .take(config.fine_population)
        .copied()
        .collect();
    let mut population = Population {
        individuals,
        generation: 0,
    };
    let mut trace = FitnessTrace::default();
    trace.record(&population);
    let mut best = population.individuals[0];

    let size = population.len();
    let elite_count = config.elite_count.min(size);
    for g in 0..config.fine_generations {
        let (prob, scale) = mutation_schedule(g, config);
        let steps = problem.space.scaled_steps(scale);
        let mut next: Vec<Chromosome> = elites(&population, elite_count).collect();
        breed(
            &population,
            config.fine_crossover_offspring,
            prob,
            &steps,
            problem,
            rng,
            &mut next,
        );
        // Mutation-only offspring come from the non-elite part of the population.
        let pool = if size > elite_count { elite_count..size } else { 0..size };
        for _ in 0..config.fine_mutation_only_offspring {
            let parent = &population.individuals[rng.random_range(pool.clone())];
            let mut m = mutate(parent, prob, &steps, problem.mode, &problem.space, rng);
            m.origin = Origin::MutationOnly;
            next.push(m);
        }
        population = Population {
            individuals: next,
            generation: g + 1,
        };
        evaluate(&mut population, problem);
        population.sort();
        trace.record(&population);
        if population.individuals[0].fitness_or_inf() < best.fitness_or_inf() {
            best = population.individuals[0];
        }

        let done = g + 1;
        if done >= config.stagnation_window {
            let before = trace.entries[done - config.stagnation_window].best_fitness;
            let now = trace.entries[done].best_fitness;
            if before - now < config.stagnation_epsilon {
                break;
            }
        }
    }
    Ok((best, trace))
}
