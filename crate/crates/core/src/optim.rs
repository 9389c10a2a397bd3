//! Search for the operating point whose predicted responses are closest to a
//! pair of target (minimum) values.
//!
//! The search is a real-coded genetic algorithm over the factor box. Every
//! few generations, and once at the end, the incumbent is polished by a
//! projected BFGS iteration with finite-difference gradients. Candidates are
//! always clipped into the box, so the objective is never evaluated outside
//! the experimental region.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Prediction, Predictor};
use crate::data::{Coding, MachineId};
use crate::error::{Error, Result};

/// Box of admissible factor settings, raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl SearchSpace {
    pub fn new(lower: [f64; 3], upper: [f64; 3]) -> Result<Self> {
        for d in 0..3 {
            if !(lower[d] < upper[d]) || !lower[d].is_finite() || !upper[d].is_finite() {
                return Err(Error::invalid(format!(
                    "search space dimension {d}: need lower < upper, got [{}, {}]",
                    lower[d], upper[d]
                )));
            }
        }
        Ok(SearchSpace { lower, upper })
    }

    pub fn from_coding(coding: &Coding) -> Result<Self> {
        Self::new(coding.lower(), coding.upper())
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        (0..3).all(|d| x[d] >= self.lower[d] && x[d] <= self.upper[d])
    }

    pub fn clip(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| x[d].clamp(self.lower[d], self.upper[d]))
    }

    fn range(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }
}

/// Target responses on the original scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub power: f64,
    pub roughness: f64,
}

impl ThresholdVector {
    pub fn new(power: f64, roughness: f64) -> Result<Self> {
        if !(power > 0.0 && roughness > 0.0) || !power.is_finite() || !roughness.is_finite() {
            return Err(Error::invalid(format!(
                "thresholds must be positive, got power {power}, roughness {roughness}"
            )));
        }
        Ok(ThresholdVector { power, roughness })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Euclidean distance of the componentwise relative deviations.
    #[default]
    Relative,
    Euclidean,
    /// Euclidean distance between log responses.
    Log,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Relative => "relative",
            Metric::Euclidean => "euclidean",
            Metric::Log => "log",
        }
    }

    /// Distance from `value` to `reference` (the reference scales the
    /// relative metric). Inputs must be positive.
    pub fn between(self, value: [f64; 2], reference: [f64; 2]) -> Result<f64> {
        if value.iter().chain(&reference).any(|v| !(*v > 0.0)) {
            return Err(Error::invalid(format!(
                "distance inputs must be positive, got {value:?} and {reference:?}"
            )));
        }
        let sq = |f: &dyn Fn(usize) -> f64| (f(0) * f(0) + f(1) * f(1)).sqrt();
        Ok(match self {
            Metric::Relative => sq(&|i| (value[i] - reference[i]) / reference[i]),
            Metric::Euclidean => sq(&|i| value[i] - reference[i]),
            Metric::Log => sq(&|i| value[i].ln() - reference[i].ln()),
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(Metric::Relative),
            "euclidean" => Ok(Metric::Euclidean),
            "log" => Ok(Metric::Log),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Distance between a prediction and the thresholds.
pub fn distance(pred: &Prediction, ymin: &ThresholdVector, metric: Metric) -> Result<f64> {
    metric.between([pred.roughness, pred.power], [ymin.roughness, ymin.power])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub elitism: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub uniform_mutation_rate: f64,
    pub boundary_mutation_rate: f64,
    pub gaussian_mutation_rate: f64,
    /// Gaussian mutation standard deviation as a fraction of each range.
    pub gaussian_scale: f64,
    /// Refine the incumbent every this many generations (0 = only at the end).
    pub refine_every: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            generations: 20,
            elitism: 2,
            tournament_size: 3,
            crossover_rate: 0.7,
            uniform_mutation_rate: 0.1,
            boundary_mutation_rate: 0.1,
            gaussian_mutation_rate: 0.2,
            gaussian_scale: 0.1,
            refine_every: 5,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 10 {
            return Err(Error::invalid("population must be at least 10"));
        }
        if self.elitism == 0 || self.elitism > self.population {
            return Err(Error::invalid("elitism must be between 1 and the population size"));
        }
        if self.tournament_size == 0 {
            return Err(Error::invalid("tournament size must be at least 1"));
        }
        let rates = [
            self.crossover_rate,
            self.uniform_mutation_rate,
            self.boundary_mutation_rate,
            self.gaussian_mutation_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid("operator rates must lie in [0, 1]"));
        }
        if rates[1] + rates[2] + rates[3] > 1.0 + 1e-12 {
            return Err(Error::invalid("mutation rates must sum to at most 1"));
        }
        if !(self.gaussian_scale >= 0.0) {
            return Err(Error::invalid("gaussian scale must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Individual {
    pub x: [f64; 3],
    pub fitness: f64,
}

fn by_fitness(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    // NaN fitness sorts last.
    let key = |f: f64| if f.is_nan() { f64::INFINITY } else { f };
    key(a.fitness).total_cmp(&key(b.fitness))
}

/// Objective wrapper that counts evaluations.
pub struct Counted<F> {
    f: F,
    count: AtomicUsize,
}

impl<F: Fn(&[f64; 3]) -> f64 + Sync> Counted<F> {
    pub fn new(f: F) -> Self {
        Counted {
            f,
            count: AtomicUsize::new(0),
        }
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        (self.f)(x)
    }

    pub fn evaluations(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

fn evaluate_all<F: Fn(&[f64; 3]) -> f64 + Sync>(xs: Vec<[f64; 3]>, objective: &Counted<F>) -> Vec<Individual> {
    xs.into_par_iter()
        .map(|x| Individual {
            fitness: objective.eval(&x),
            x,
        })
        .collect()
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Individual], size: usize, rng: &mut R) -> &'a Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if by_fitness(c, best).is_lt() {
            best = c;
        }
    }
    best
}

/// Blend (BLX-0.5) crossover, clipped to the box.
fn blend<R: Rng + ?Sized>(a: &[f64; 3], b: &[f64; 3], space: &SearchSpace, rng: &mut R) -> [f64; 3] {
    let child = std::array::from_fn(|d| {
        let (lo, hi) = (a[d].min(b[d]), a[d].max(b[d]));
        let ext = 0.5 * (hi - lo);
        lo - ext + rng.random::<f64>() * (hi - lo + 2.0 * ext)
    });
    space.clip(child)
}

pub fn uniform_mutation<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> [f64; 3] {
    std::array::from_fn(|d| space.lower[d] + rng.random::<f64>() * space.range(d))
}

/// Moves one random coordinate onto its lower or upper bound.
pub fn boundary_mutation<R: Rng + ?Sized>(x: &[f64; 3], space: &SearchSpace, rng: &mut R) -> [f64; 3] {
    let mut y = *x;
    let d = rng.random_range(0..3);
    y[d] = if rng.random::<bool>() {
        space.upper[d]
    } else {
        space.lower[d]
    };
    y
}

pub fn gaussian_mutation<R: Rng + ?Sized>(
    x: &[f64; 3],
    space: &SearchSpace,
    scale: f64,
    rng: &mut R,
) -> [f64; 3] {
    let y = std::array::from_fn(|d| {
        let z: f64 = StandardNormal.sample(rng);
        x[d] + scale * space.range(d) * z
    });
    space.clip(y)
}

fn ga_step_inner<F, R>(
    population: &[Individual],
    objective: &Counted<F>,
    space: &SearchSpace,
    config: &GaConfig,
    rng: &mut R,
) -> Vec<Individual>
where
    F: Fn(&[f64; 3]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let mut sorted = population.to_vec();
    sorted.sort_by(by_fitness);
    let elites = config.elitism.min(sorted.len());
    let mut next: Vec<Individual> = sorted[..elites].to_vec();

    // Offspring are generated serially so the RNG stream is fixed, then
    // evaluated in parallel.
    let mut children = Vec::with_capacity(config.population - elites);
    while next.len() + children.len() < config.population {
        let p1 = tournament(&sorted, config.tournament_size, rng);
        let mut child = p1.x;
        if rng.random::<f64>() < config.crossover_rate {
            let p2 = tournament(&sorted, config.tournament_size, rng);
            child = blend(&p1.x, &p2.x, space, rng);
        }
        let r: f64 = rng.random();
        let u = config.uniform_mutation_rate;
        let b = u + config.boundary_mutation_rate;
        let g = b + config.gaussian_mutation_rate;
        if r < u {
            child = uniform_mutation(space, rng);
        } else if r < b {
            child = boundary_mutation(&child, space, rng);
        } else if r < g {
            child = gaussian_mutation(&child, space, config.gaussian_scale, rng);
        }
        children.push(child);
    }
    next.extend(evaluate_all(children, objective));
    next.sort_by(by_fitness);
    next
}

/// One generation: tournament selection, blend crossover, one of three
/// mutation operators, elites carried over unchanged. The returned
/// population is sorted by fitness.
pub fn ga_step<F, R>(
    population: &[Individual],
    objective: F,
    space: &SearchSpace,
    config: &GaConfig,
    rng: &mut R,
) -> Vec<Individual>
where
    F: Fn(&[f64; 3]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    ga_step_inner(population, &Counted::new(objective), space, config, rng)
}

/// Outcome of [`quasi_newton_refine`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Projected-gradient infinity norm fell below the tolerance.
    pub converged: bool,
    /// The objective returned a non-finite value somewhere; `x` is the best
    /// finite point seen.
    pub non_finite: bool,
}

pub const REFINE_MAX_ITERATIONS: usize = 200;
pub const REFINE_GRADIENT_TOLERANCE: f64 = 1e-8;
/// Finite-difference step as a fraction of each dimension's range.
pub const REFINE_STEP: f64 = 1e-6;

/// Projected BFGS in box-normalized coordinates.
///
/// Each dimension is mapped to `u ∈ [0, 1]`; gradients are central
/// differences with step `1e-6` in `u` (one-sided at the bounds, so no
/// evaluation leaves the box). Variables pinned at a bound with the gradient
/// pointing outward are held fixed for the step; the inverse-Hessian
/// approximation is reset whenever that active set changes. Dimensions with
/// `lower == upper` are fixed. Stops when the projected gradient's infinity
/// norm drops below `1e-8`, after 200 iterations, or when no descent step
/// can be found.
pub fn quasi_newton_refine<F>(x0: &[f64], mut objective: F, lower: &[f64], upper: &[f64]) -> Result<RefineResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::invalid("bounds and start point differ in dimension"));
    }
    for d in 0..n {
        if !(lower[d] <= upper[d]) {
            return Err(Error::invalid(format!("dimension {d}: lower bound above upper")));
        }
        if !(x0[d] >= lower[d] && x0[d] <= upper[d]) {
            return Err(Error::invalid(format!("start point outside bounds in dimension {d}")));
        }
    }
    let range: Vec<f64> = (0..n).map(|d| upper[d] - lower[d]).collect();
    let free: Vec<bool> = range.iter().map(|r| *r > 0.0).collect();
    let to_x = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|d| {
                if free[d] {
                    if u[d] >= 1.0 {
                        upper[d]
                    } else {
                        (lower[d] + u[d] * range[d]).clamp(lower[d], upper[d])
                    }
                } else {
                    lower[d]
                }
            })
            .collect()
    };

    let mut evaluations = 0usize;
    let mut non_finite = false;
    let mut eval = |u: &[f64]| -> f64 {
        evaluations += 1;
        let v = objective(&to_x(u));
        if v.is_finite() {
            v
        } else {
            non_finite = true;
            f64::INFINITY
        }
    };

    let mut u: Vec<f64> = (0..n)
        .map(|d| if free[d] { (x0[d] - lower[d]) / range[d] } else { 0.0 })
        .collect();
    let mut fu = eval(&u);
    if !fu.is_finite() {
        return Ok(RefineResult {
            x: x0.to_vec(),
            value: f64::INFINITY,
            iterations: 0,
            evaluations,
            converged: false,
            non_finite: true,
        });
    }

    let h = REFINE_STEP;
    let gradient = |u: &[f64], fu: f64, eval: &mut dyn FnMut(&[f64]) -> f64| -> Vec<f64> {
        let mut g = vec![0.0; n];
        let mut probe = u.to_vec();
        for d in 0..n {
            if !free[d] {
                continue;
            }
            let ud = u[d];
            g[d] = if ud - h >= 0.0 && ud + h <= 1.0 {
                probe[d] = ud + h;
                let fp = eval(&probe);
                probe[d] = ud - h;
                let fm = eval(&probe);
                (fp - fm) / (2.0 * h)
            } else if ud + h > 1.0 {
                probe[d] = ud - h;
                (fu - eval(&probe)) / h
            } else {
                probe[d] = ud + h;
                (eval(&probe) - fu) / h
            };
            probe[d] = ud;
        }
        g
    };

    let identity = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    };
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut g = gradient(&u, fu, &mut eval);
    let mut prev_active: Vec<bool> = vec![false; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < REFINE_MAX_ITERATIONS {
        let active: Vec<bool> = (0..n)
            .map(|d| !free[d] || (u[d] <= 0.0 && g[d] > 0.0) || (u[d] >= 1.0 && g[d] < 0.0))
            .collect();
        let pg: Vec<f64> = (0..n).map(|d| if active[d] { 0.0 } else { g[d] }).collect();
        if pg.iter().all(|v| v.abs() < REFINE_GRADIENT_TOLERANCE) {
            converged = true;
            break;
        }
        if active != prev_active {
            hinv = identity(n);
            fresh = true;
            prev_active = active.clone();
        }
        iterations += 1;

        let mut step_found = false;
        for attempt in 0..2 {
            let mut dir: Vec<f64> = (0..n)
                .map(|i| {
                    if active[i] {
                        0.0
                    } else {
                        -(0..n).map(|j| hinv[i][j] * pg[j]).sum::<f64>()
                    }
                })
                .collect();
            let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                dir = pg.iter().map(|v| -v).collect();
            }
            let mut t = 1.0;
            for _ in 0..60 {
                let trial: Vec<f64> = (0..n)
                    .map(|d| if free[d] { (u[d] + t * dir[d]).clamp(0.0, 1.0) } else { 0.0 })
                    .collect();
                let decrease: f64 = (0..n).map(|d| g[d] * (trial[d] - u[d])).sum();
                if trial == u {
                    break;
                }
                let ft = eval(&trial);
                if ft <= fu + 1e-4 * decrease && ft < fu {
                    let g_new = gradient(&trial, ft, &mut eval);
                    let s: Vec<f64> = (0..n).map(|d| trial[d] - u[d]).collect();
                    let y: Vec<f64> = (0..n)
                        .map(|d| if active[d] { 0.0 } else { g_new[d] - g[d] })
                        .collect();
                    let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                    if sy > 1e-16 {
                        if fresh {
                            let yy: f64 = y.iter().map(|v| v * v).sum();
                            let scale = sy / yy;
                            for (i, row) in hinv.iter_mut().enumerate() {
                                for (j, v) in row.iter_mut().enumerate() {
                                    *v = if i == j && !active[i] { scale } else { 0.0 };
                                }
                            }
                            fresh = false;
                        }
                        bfgs_update(&mut hinv, &s, &y, sy);
                    }
                    u = trial;
                    fu = ft;
                    g = g_new;
                    step_found = true;
                    break;
                }
                t *= 0.5;
            }
            if step_found || attempt == 1 {
                break;
            }
            // Retry once along the steepest-descent direction.
            hinv = identity(n);
            fresh = true;
        }
        if !step_found {
            break;
        }
    }
    Ok(RefineResult {
        x: to_x(&u),
        value: fu,
        iterations,
        evaluations,
        converged,
        non_finite,
    })
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / sᵀy`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Result of the hybrid search on an arbitrary objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub x: [f64; 3],
    pub value: f64,
    pub generation_found: usize,
    pub evaluations: usize,
    /// Incumbent value after initialization and after each generation.
    pub history: Vec<f64>,
}

/// Genetic search with periodic quasi-Newton refinement of the incumbent.
/// A refined point replaces the incumbent only when strictly better.
pub fn minimize<F>(objective: F, space: &SearchSpace, config: &GaConfig) -> Result<SearchOutcome>
where
    F: Fn(&[f64; 3]) -> f64 + Sync,
{
    config.validate()?;
    let objective = Counted::new(objective);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial: Vec<[f64; 3]> = (0..config.population)
        .map(|_| uniform_mutation(space, &mut rng))
        .collect();
    let mut population = evaluate_all(initial, &objective);
    population.sort_by(by_fitness);
    let mut generation_found = 0;
    let mut history = vec![population[0].fitness];

    let refine = |population: &mut Vec<Individual>, generation: usize, found: &mut usize| -> Result<()> {
        let best = population[0];
        let result = quasi_newton_refine(
            &best.x,
            |x: &[f64]| objective.eval(&[x[0], x[1], x[2]]),
            &space.lower,
            &space.upper,
        )?;
        if result.value < best.fitness {
            population[0] = Individual {
                x: [result.x[0], result.x[1], result.x[2]],
                fitness: result.value,
            };
            *found = generation;
        }
        Ok(())
    };

    for generation in 1..=config.generations {
        let before = population[0].fitness;
        population = ga_step_inner(&population, &objective, space, config, &mut rng);
        if by_fitness(&population[0], &Individual { x: [0.0; 3], fitness: before }).is_lt() {
            generation_found = generation;
        }
        let is_last = generation == config.generations;
        if !is_last && config.refine_every > 0 && generation % config.refine_every == 0 {
            refine(&mut population, generation, &mut generation_found)?;
        }
        if is_last {
            refine(&mut population, generation, &mut generation_found)?;
        }
        history.push(population[0].fitness);
    }
    if config.generations == 0 {
        refine(&mut population, 0, &mut generation_found)?;
        history.push(population[0].fitness);
    }

    let best = population[0];
    Ok(SearchOutcome {
        x: best.x,
        value: best.fitness,
        generation_found,
        evaluations: objective.evaluations(),
        history,
    })
}

/// Optimal operating point for one machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub machine: MachineId,
    pub e_star: [f64; 3],
    pub predicted: Prediction,
    pub distance: f64,
    pub metric: Metric,
    pub thresholds: ThresholdVector,
    pub generations: usize,
    pub generation_found: usize,
    pub evaluations: usize,
    pub seed: u64,
}

/// Minimizes the distance between the model's point prediction and `ymin`
/// over `space`.
pub fn optimize(
    predictor: &Predictor,
    machine: MachineId,
    ymin: &ThresholdVector,
    metric: Metric,
    space: &SearchSpace,
    config: &GaConfig,
) -> Result<OptimizationResult> {
    ThresholdVector::new(ymin.power, ymin.roughness)?;
    let objective = |x: &[f64; 3]| {
        distance(&predictor.predict(*x, machine), ymin, metric).unwrap_or(f64::INFINITY)
    };
    let outcome = minimize(objective, space, config)?;
    let predicted = predictor.predict(outcome.x, machine);
    let d = distance(&predicted, ymin, metric)?;
    Ok(OptimizationResult {
        machine,
        e_star: outcome.x,
        predicted,
        distance: d,
        metric,
        thresholds: *ymin,
        generations: config.generations,
        generation_found: outcome.generation_found,
        evaluations: outcome.evaluations,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_space() -> SearchSpace {
        SearchSpace::new([0.0; 3], [1.0; 3]).unwrap()
    }

    #[test]
    fn distance_examples() {
        let ymin = ThresholdVector::new(40.0, 0.33).unwrap();
        let same = Prediction { roughness: 0.33, power: 40.0 };
        assert_eq!(distance(&same, &ymin, Metric::Relative).unwrap(), 0.0);
        let double = Prediction { roughness: 0.66, power: 40.0 };
        assert!((distance(&double, &ymin, Metric::Relative).unwrap() - 1.0).abs() < 1e-15);
        let bad = Prediction { roughness: -1.0, power: 40.0 };
        assert!(distance(&bad, &ymin, Metric::Relative).is_err());
        assert!(ThresholdVector::new(0.0, 1.0).is_err());
    }

    #[test]
    fn ga_config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let c = GaConfig { population: 5, ..GaConfig::default() };
        assert!(c.validate().is_err());
        let c = GaConfig { elitism: 0, ..GaConfig::default() };
        assert!(c.validate().is_err());
        let c = GaConfig { crossover_rate: 1.5, ..GaConfig::default() };
        assert!(c.validate().is_err());
        let c = GaConfig {
            uniform_mutation_rate: 0.5,
            boundary_mutation_rate: 0.4,
            gaussian_mutation_rate: 0.3,
            ..GaConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn identity_step_is_fixed_point() {
        let config = GaConfig {
            population: 12,
            elitism: 12,
            crossover_rate: 0.0,
            uniform_mutation_rate: 0.0,
            boundary_mutation_rate: 0.0,
            gaussian_mutation_rate: 0.0,
            ..GaConfig::default()
        };
        let space = unit_space();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = |x: &[f64; 3]| x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>();
        let mut pop: Vec<Individual> = (0..12)
            .map(|_| {
                let x = uniform_mutation(&space, &mut rng);
                Individual { x, fitness: f(&x) }
            })
            .collect();
        pop.sort_by(by_fitness);
        let next = ga_step(&pop, f, &space, &config, &mut rng);
        assert_eq!(next, pop);
    }

    #[test]
    fn refine_rejects_bad_start() {
        let r = quasi_newton_refine(&[2.0], |x| x[0] * x[0], &[0.0], &[1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn refine_flags_non_finite() {
        let r = quasi_newton_refine(&[0.5, 0.5], |x| if x[0] > 0.6 { f64::NAN } else { -x[0] }, &[0.0, 0.0], &[1.0, 1.0])
            .unwrap();
        assert!(r.non_finite);
        assert!(r.value.is_finite());
        assert!(r.x[0] <= 0.6);
    }

    #[test]
    fn minimize_finds_interior_minimum() {
        let target = [0.21, 0.77, 0.5];
        let f = |x: &[f64; 3]| (0..3).map(|d| (x[d] - target[d]).powi(2)).sum::<f64>();
        let out = minimize(f, &unit_space(), &GaConfig { seed: 3, ..GaConfig::default() }).unwrap();
        for d in 0..3 {
            assert!((out.x[d] - target[d]).abs() < 1e-6);
        }
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
