use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::context::{Fitness, FitnessContext};
use crate::error::{Error, Result};

/// Integer genetic algorithm over shift pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub max_iterations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elite_count: usize,
    pub tournament_size: usize,
    pub rng_seed: u64,
    /// Results whose best fitness falls below this are flagged low-confidence.
    pub confidence_floor: f64,
    /// Hill-climb the incumbent over its 8-neighborhood once the generations
    /// are spent, within the remaining evaluation budget.
    pub polish: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            max_iterations: 50,
            mutation_rate: 0.1,
            crossover_rate: 0.8,
            elite_count: 2,
            tournament_size: 3,
            rng_seed: 0,
            confidence_floor: 0.1,
            polish: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::invalid(format!("population must be even and at least 4, got {}", self.population)));
        }
        if self.elite_count >= self.population {
            return Err(Error::invalid("elite count must be smaller than the population"));
        }
        for (name, p) in [("mutation rate", self.mutation_rate), ("crossover rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.tournament_size == 0 {
            return Err(Error::invalid("tournament size must be at least 1"));
        }
        Ok(())
    }

    /// Upper bound on distinct fitness evaluations of one search.
    pub fn budget(&self) -> usize {
        self.population * (self.max_iterations + 1)
    }
}

/// Outcome of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: (i32, i32),
    pub fitness: Fitness,
    pub evaluations: usize,
    /// Best fitness among the initial population.
    pub initial_best: f64,
}

type Genome = (i32, i32);

struct Memo<'a> {
    ctx: &'a FitnessContext<'a>,
    cache: HashMap<Genome, Fitness>,
    best: Option<(Genome, Fitness)>,
}

impl Memo<'_> {
    fn evaluations(&self) -> usize {
        self.cache.len()
    }

    /// Evaluates the uncached genomes of `batch` (at most `limit` of them, in
    /// order of first appearance) concurrently.
    fn fill(&mut self, batch: &[Genome], limit: usize) -> Result<()> {
        let mut fresh: Vec<Genome> = Vec::new();
        for g in batch {
            if fresh.len() == limit {
                break;
            }
            if !self.cache.contains_key(g) && !fresh.contains(g) {
                fresh.push(*g);
            }
        }
        let values: Vec<Fitness> = fresh.par_iter().map(|&g| self.ctx.fitness(g)).collect::<Result<_>>()?;
        for (g, f) in fresh.into_iter().zip(values) {
            self.cache.insert(g, f);
            if better(f.value, g, self.best.map(|(bg, bf)| (bf.value, bg))) {
                self.best = Some((g, f));
            }
        }
        Ok(())
    }

    fn value(&self, g: &Genome) -> f64 {
        self.cache[g].value
    }
}

// Higher value wins; ties go to the lexicographically smaller shift.
fn better(value: f64, g: Genome, incumbent: Option<(f64, Genome)>) -> bool {
    match incumbent {
        None => true,
        Some((v, bg)) => value > v || (value == v && g < bg),
    }
}

fn tournament(rng: &mut ChaCha8Rng, pop: &[Genome], memo: &Memo<'_>, size: usize) -> Genome {
    let mut best = pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let cand = pop[rng.gen_range(0..pop.len())];
        if memo.value(&cand) > memo.value(&best) {
            best = cand;
        }
    }
    best
}

/// Runs the search over `[lo, hi]^2`.
pub fn run(ctx: &FitnessContext<'_>, bounds: (i32, i32), cfg: &GaConfig) -> Result<GaOutcome> {
    cfg.validate()?;
    let (lo, hi) = bounds;
    let mut memo = Memo { ctx, cache: HashMap::new(), best: None };
    if lo == hi {
        memo.fill(&[(lo, lo)], 1)?;
        let (best, fitness) = memo.best.expect("one evaluation");
        return Ok(GaOutcome { best, fitness, evaluations: 1, initial_best: fitness.value });
    }

    let budget = cfg.budget();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut pop: Vec<Genome> = (0..cfg.population).map(|_| (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))).collect();
    memo.fill(&pop, budget)?;
    let initial_best = pop.iter().map(|g| memo.value(g)).fold(f64::NEG_INFINITY, f64::max);

    for _ in 0..cfg.max_iterations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| memo.value(&pop[b]).total_cmp(&memo.value(&pop[a])));
        let mut next: Vec<Genome> = order[..cfg.elite_count].iter().map(|&i| pop[i]).collect();
        while next.len() < cfg.population {
            let mut a = tournament(&mut rng, &pop, &memo, cfg.tournament_size);
            let mut b = tournament(&mut rng, &pop, &memo, cfg.tournament_size);
            if rng.gen_bool(cfg.crossover_rate) {
                if rng.gen_bool(0.5) {
                    std::mem::swap(&mut a.0, &mut b.0);
                }
                if rng.gen_bool(0.5) {
                    std::mem::swap(&mut a.1, &mut b.1);
                }
            }
            for child in [&mut a, &mut b] {
                if rng.gen_bool(cfg.mutation_rate) {
                    child.0 = rng.gen_range(lo..=hi);
                }
                if rng.gen_bool(cfg.mutation_rate) {
                    child.1 = rng.gen_range(lo..=hi);
                }
            }
            for child in [a, b] {
                if next.len() == cfg.population {
                    break;
                }
                // Revisits cost nothing but stall the search; replace them
                // with a random immigrant.
                let child = if memo.cache.contains_key(&child) || next.contains(&child) {
                    (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
                } else {
                    child
                };
                next.push(child);
            }
        }
        pop = next;
        // Each generation adds at most `population - elite_count` new genomes.
        memo.fill(&pop, budget - memo.evaluations())?;
    }

    if cfg.polish {
        while memo.evaluations() < budget {
            let (center, _) = memo.best.expect("nonempty search");
            let neighbors: Vec<Genome> = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
                .iter()
                .map(|&(dx, dy)| (center.0 + dx, center.1 + dy))
                .filter(|&(x, y)| (lo..=hi).contains(&x) && (lo..=hi).contains(&y))
                .collect();
            memo.fill(&neighbors, budget - memo.evaluations())?;
            if memo.best.map(|(g, _)| g) == Some(center) {
                break;
            }
        }
    }

    let (best, fitness) = memo.best.expect("nonempty search");
    Ok(GaOutcome { best, fitness, evaluations: memo.evaluations(), initial_best })
}
