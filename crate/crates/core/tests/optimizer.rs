mod common;

use std::sync::Mutex;

use machopt_core::analysis::{Prediction, PredictionMode, Predictor};
use machopt_core::data::{machining_factors, Coding, CovariateScale, MachineId};
use machopt_core::optim::{
    boundary_mutation, distance, ga_step, minimize, optimize, quasi_newton_refine, uniform_mutation, GaConfig,
    Individual, Metric, SearchSpace, ThresholdVector,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space() -> SearchSpace {
    SearchSpace::new([1.0, 134.0, 950.0], [3.0, 268.0, 1900.0]).unwrap()
}

fn rastrigin_like(x: &[f64; 3]) -> f64 {
    // Several local minima over the machining box, global one inside.
    let u = [(x[0] - 1.0) / 2.0, (x[1] - 134.0) / 134.0, (x[2] - 950.0) / 950.0];
    let c = [0.3, 0.6, 0.45];
    (0..3)
        .map(|d| {
            let z = u[d] - c[d];
            10.0 * z * z - 0.3 * (12.0 * std::f64::consts::PI * z).cos() + 0.3
        })
        .sum()
}

#[test]
fn distance_examples() {
    let ymin = ThresholdVector::new(24.0, 0.28).unwrap();
    let at = Prediction { roughness: 0.28, power: 24.0 };
    for m in [Metric::Relative, Metric::Euclidean, Metric::Log] {
        assert_eq!(distance(&at, &ymin, m).unwrap(), 0.0);
    }
    let twice = Prediction { roughness: 0.28, power: 48.0 };
    assert!((distance(&twice, &ymin, Metric::Relative).unwrap() - 1.0).abs() < 1e-15);
    assert!(Metric::Euclidean.between([0.0, 1.0], [1.0, 1.0]).is_err());
}

#[test]
fn relative_metric_formula() {
    let d = Metric::Relative.between([1.5, 50.0], [1.2, 40.0]).unwrap();
    let expected = (((1.5f64 - 1.2) / 1.2).powi(2) + ((50.0f64 - 40.0) / 40.0).powi(2)).sqrt();
    assert!((d - expected).abs() < 1e-15);
}

#[test]
fn boundary_mutation_lands_on_a_face() {
    let s = space();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let x = uniform_mutation(&s, &mut rng);
        let y = boundary_mutation(&x, &s, &mut rng);
        let on_face = (0..3).any(|d| y[d] == s.lower[d] || y[d] == s.upper[d]);
        assert!(on_face && s.contains(&y));
    }
}

#[test]
fn offspring_stay_in_bounds_and_best_never_worsens() {
    let s = space();
    let config = GaConfig { seed: 9, ..GaConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pop: Vec<Individual> = (0..config.population)
        .map(|_| {
            let x = uniform_mutation(&s, &mut rng);
            Individual { x, fitness: rastrigin_like(&x) }
        })
        .collect();
    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    let mut best = pop[0].fitness;
    for _ in 0..50 {
        pop = ga_step(&pop, rastrigin_like, &s, &config, &mut rng);
        assert!(pop.iter().all(|i| s.contains(&i.x)));
        assert!(pop[0].fitness <= best);
        best = pop[0].fitness;
    }
}

#[test]
fn refine_recovers_interior_quadratic_minimum() {
    let c = [0.3, -1.7, 4.2];
    let f = |x: &[f64]| (0..3).map(|d| (x[d] - c[d]).powi(2)).sum::<f64>();
    let r = quasi_newton_refine(&[0.0, 0.0, 0.0], f, &[-5.0; 3], &[5.0; 3]).unwrap();
    assert!(r.converged);
    for d in 0..3 {
        assert!((r.x[d] - c[d]).abs() < 1e-6, "{:?}", r.x);
    }
}

#[test]
fn refine_projects_separable_quadratic_onto_box() {
    let c = [2.0, -3.0, 0.25];
    let w = [1.0, 4.0, 0.5];
    let f = |x: &[f64]| (0..3).map(|d| w[d] * (x[d] - c[d]).powi(2)).sum::<f64>();
    let r = quasi_newton_refine(&[0.5, 0.5, 0.5], f, &[0.0; 3], &[1.0; 3]).unwrap();
    let expected = [1.0, 0.0, 0.25];
    for d in 0..3 {
        assert!((r.x[d] - expected[d]).abs() < 1e-6, "{:?}", r.x);
    }
}

#[test]
fn refine_solves_embedded_rosenbrock() {
    let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2) + x[2];
    let r = quasi_newton_refine(&[-1.2, 1.0, 0.5], f, &[-2.0, -2.0, 0.5], &[2.0, 2.0, 0.5]).unwrap();
    assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?} after {} its", r.x, r.iterations);
    assert_eq!(r.x[2], 0.5);
}

#[test]
fn every_evaluation_is_inside_the_box() {
    let s = space();
    let seen = Mutex::new(Vec::new());
    let f = |x: &[f64; 3]| {
        seen.lock().unwrap().push(*x);
        rastrigin_like(x)
    };
    let out = minimize(f, &s, &GaConfig { seed: 4, ..GaConfig::default() }).unwrap();
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen.len(), out.evaluations);
    assert!(seen.iter().all(|x| s.contains(x)));
    assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn optimize_is_deterministic_per_seed() {
    let ds = common::factorial_dataset(&common::reference_truth(), 2);
    let draws = common::fit(&ds, &common::mcmc(1100, 100, 1, 3)).thinned(10);
    let coding = Coding::new(&machining_factors(), CovariateScale::Coded);
    let p = Predictor::new(&draws, coding, PredictionMode::PosteriorMean).unwrap();
    let ymin = ThresholdVector::new(20.0, 0.4).unwrap();
    let cfg = GaConfig { seed: 77, ..GaConfig::default() };
    let a = optimize(&p, MachineId::B, &ymin, Metric::Relative, &space(), &cfg).unwrap();
    let b = optimize(&p, MachineId::B, &ymin, Metric::Relative, &space(), &cfg).unwrap();
    assert_eq!(a, b);
    let again = distance(&p.predict(a.e_star, MachineId::B), &ymin, Metric::Relative).unwrap();
    assert_eq!(again, a.distance);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn euclidean_and_log_metrics_are_symmetric(
        u in prop::array::uniform2(1e-3..1e3f64), v in prop::array::uniform2(1e-3..1e3f64),
    ) {
        for m in [Metric::Euclidean, Metric::Log] {
            prop_assert_eq!(m.between(u, v).unwrap(), m.between(v, u).unwrap());
        }
    }

    #[test]
    fn incumbent_history_is_monotone(seed in any::<u64>()) {
        let cfg = GaConfig { seed, generations: 8, refine_every: 3, ..GaConfig::default() };
        let out = minimize(rastrigin_like, &space(), &cfg).unwrap();
        prop_assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(out.history.len(), 9);
    }
}
