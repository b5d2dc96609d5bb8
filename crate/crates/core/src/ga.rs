//! Real-coded genetic algorithm with tournament selection, two-point
//! crossover, uniform mutation and elitism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Crossover {
    TwoPoint,
    /// Offspring are copies of the first parent.
    Disabled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub parents_mating: usize,
    pub tournament_k: usize,
    pub crossover: Crossover,
    pub mutation_rate: f64,
    pub elitism_fraction: f64,
    /// Inclusive `(low, high)` per gene.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl GaConfig {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            population_size: 120,
            generations: 50,
            parents_mating: 60,
            tournament_k: 4,
            crossover: Crossover::TwoPoint,
            mutation_rate: 0.2,
            elitism_fraction: 0.1,
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let err = |m: &str| Err(GaError::Config(m.to_string()));
        if self.population_size == 0 {
            return err("population must be nonempty");
        }
        if self.parents_mating == 0 || self.parents_mating > self.population_size {
            return err("parents_mating must be in 1..=population_size");
        }
        if self.tournament_k == 0 {
            return err("tournament size must be positive");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate)
            || !(0.0..=1.0).contains(&self.elitism_fraction)
        {
            return err("rates must lie in [0, 1]");
        }
        if self.bounds.is_empty() {
            return err("at least one gene is required");
        }
        if self
            .bounds
            .iter()
            .any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return err("gene bounds must be finite with low <= high");
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        ((self.elitism_fraction * self.population_size as f64).ceil() as usize)
            .min(self.population_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub best_ever: f64,
    pub nan_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationStats>,
    /// Populations after each generation's evaluation, kept only on request.
    #[serde(skip)]
    pub populations: Vec<Vec<Vec<f64>>>,
}

/// Seed for the RNG of candidate `index` in `generation`.
pub fn candidate_seed(seed: u64, generation: usize, index: usize) -> u64 {
    let mut z =
        seed ^ ((generation as u64) << 32) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maximizes `fitness(genes, candidate_seed)`.
pub fn optimize<F>(config: &GaConfig, fitness: F) -> Result<GaResult, GaError>
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    optimize_inner(config, fitness, false)
}

/// Like [`optimize`] but also records every evaluated population.
pub fn optimize_traced<F>(config: &GaConfig, fitness: F) -> Result<GaResult, GaError>
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    optimize_inner(config, fitness, true)
}

fn optimize_inner<F>(config: &GaConfig, fitness: F, trace: bool) -> Result<GaResult, GaError>
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population: Vec<Vec<f64>> = (0..config.population_size)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| sample(&mut rng, lo, hi))
                .collect()
        })
        .collect();

    let mut history = Vec::with_capacity(config.generations);
    let mut populations = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let generations = config.generations.max(1);
    for generation in 0..generations {
        let scores: Vec<f64> = population
            .par_iter()
            .enumerate()
            .map(|(i, genes)| fitness(genes, candidate_seed(config.seed, generation, i)))
            .collect();
        let nan_count = scores.iter().filter(|s| s.is_nan()).count();
        let scores: Vec<f64> = scores
            .into_iter()
            .map(|s| if s.is_nan() { f64::NEG_INFINITY } else { s })
            .collect();

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let top = order[0];
        if best.as_ref().is_none_or(|(_, f)| scores[top] > *f) {
            best = Some((population[top].clone(), scores[top]));
        }
        let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
        history.push(GenerationStats {
            generation,
            best: scores[top],
            mean: if finite.is_empty() {
                f64::NEG_INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
            best_ever: best.as_ref().unwrap().1,
            nan_count,
        });
        if trace {
            populations.push(population.clone());
        }
        if generation + 1 == generations {
            break;
        }
        population = next_generation(config, &population, &scores, &order, &mut rng);
    }

    let (best, best_fitness) = best.expect("at least one generation");
    Ok(GaResult {
        best,
        best_fitness,
        history,
        populations,
    })
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Index of the winner of a `k`-tournament drawn with replacement.
pub fn tournament(rng: &mut ChaCha8Rng, scores: &[f64], k: usize) -> usize {
    let mut winner = rng.random_range(0..scores.len());
    for _ in 1..k {
        let c = rng.random_range(0..scores.len());
        if scores[c] > scores[winner] {
            winner = c;
        }
    }
    winner
}

/// Swaps the gene segment `[a, b)` of `p1` for that of `p2`.
pub fn two_point_crossover(rng: &mut ChaCha8Rng, p1: &[f64], p2: &[f64]) -> Vec<f64> {
    let n = p1.len();
    let mut a = rng.random_range(0..=n);
    let mut b = rng.random_range(0..=n);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut child = p1.to_vec();
    child[a..b].copy_from_slice(&p2[a..b]);
    child
}

fn next_generation(
    config: &GaConfig,
    population: &[Vec<f64>],
    scores: &[f64],
    order: &[usize],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let elites = config.elite_count();
    let mut next: Vec<Vec<f64>> = order[..elites]
        .iter()
        .map(|&i| population[i].clone())
        .collect();
    let parents: Vec<usize> = (0..config.parents_mating)
        .map(|_| tournament(rng, scores, config.tournament_k))
        .collect();
    let mut pair = 0;
    while next.len() < config.population_size {
        let p1 = &population[parents[pair % parents.len()]];
        let p2 = &population[parents[(pair + 1) % parents.len()]];
        pair += 1;
        let mut child = match config.crossover {
            Crossover::TwoPoint => two_point_crossover(rng, p1, p2),
            Crossover::Disabled => p1.clone(),
        };
        for (g, &(lo, hi)) in child.iter_mut().zip(&config.bounds) {
            if config.mutation_rate > 0.0 && rng.random_bool(config.mutation_rate) {
                *g = sample(rng, lo, hi);
            }
        }
        next.push(child);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(c: [f64; 2]) -> impl Fn(&[f64], u64) -> f64 + Sync {
        move |g: &[f64], _| -((g[0] - c[0]).powi(2) + (g[1] - c[1]).powi(2))
    }

    #[test]
    fn converges_on_a_convex_bowl() {
        let c = [1.7, -3.2];
        let cfg = GaConfig::new(vec![(-10.0, 10.0), (-10.0, 10.0)], 42);
        let r = optimize(&cfg, quadratic(c)).unwrap();
        assert!(r.history.len() <= 50);
        for k in 0..2 {
            assert!(
                (r.best[k] - c[k]).abs() <= 0.01 * c[k].abs(),
                "{:?}",
                r.best
            );
        }
    }

    #[test]
    fn single_elite_never_changes() {
        let mut cfg = GaConfig::new(vec![(0.0, 1.0); 3], 1);
        cfg.population_size = 1;
        cfg.parents_mating = 1;
        cfg.elitism_fraction = 1.0;
        let r = optimize_traced(&cfg, |g, _| g[0]).unwrap();
        assert!(r.populations.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = GaConfig::new(vec![(-1.0, 1.0); 2], 9);
        let a = optimize(&cfg, quadratic([0.1, 0.2])).unwrap();
        let b = optimize(&cfg, quadratic([0.1, 0.2])).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn nan_fitness_scores_negative_infinity() {
        let cfg = GaConfig {
            generations: 3,
            ..GaConfig::new(vec![(-1.0, 1.0)], 2)
        };
        let r = optimize(&cfg, |g, _| if g[0] < 0.0 { f64::NAN } else { g[0] }).unwrap();
        assert!(r.history.iter().any(|h| h.nan_count > 0));
        assert!(r.best[0] >= 0.0);
        assert!(r.best_fitness.is_finite());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = GaConfig::new(vec![(0.0, 1.0)], 0);
        cfg.parents_mating = 500;
        assert!(optimize(&cfg, |_, _| 0.0).is_err());
        let cfg = GaConfig {
            mutation_rate: 1.5,
            ..GaConfig::new(vec![(0.0, 1.0)], 0)
        };
        assert!(optimize(&cfg, |_, _| 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn best_ever_is_nondecreasing(seed in 0u64..1000) {
            let cfg = GaConfig { population_size: 20, parents_mating: 10, generations: 15, ..GaConfig::new(vec![(-5.0, 5.0); 3], seed) };
            let r = optimize(&cfg, |g, _| -(g[0].sin() + g[1] * g[1] - g[2]).abs()).unwrap();
            prop_assert!(r.history.windows(2).all(|w| w[1].best_ever >= w[0].best_ever));
            // with elitism the per-generation best is itself monotone
            prop_assert!(r.history.windows(2).all(|w| w[1].best >= w[0].best));
        }

        #[test]
        fn tournament_picks_a_member(seed in 0u64..1000, n in 1usize..40, k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let w = tournament(&mut rng, &scores, k);
            prop_assert!(w < n);
        }

        #[test]
        fn without_variation_no_new_genomes_appear(seed in 0u64..1000) {
            let cfg = GaConfig {
                population_size: 16,
                parents_mating: 8,
                generations: 6,
                mutation_rate: 0.0,
                crossover: Crossover::Disabled,
                ..GaConfig::new(vec![(-1.0, 1.0); 2], seed)
            };
            let r = optimize_traced(&cfg, |g, _| g[0] - g[1]).unwrap();
            for w in r.populations.windows(2) {
                prop_assert_eq!(w[0].len(), w[1].len());
                for child in &w[1] {
                    prop_assert!(w[0].contains(child));
                }
            }
        }
    }
}
