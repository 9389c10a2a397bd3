#![allow(dead_code)]

use machopt_core::data::{full_factorial, machining_factors, simulate_dataset, CovariateScale, Dataset, Truth};
use machopt_core::design::{build_design, SurDesign};
use machopt_core::gibbs::{run_chain, McmcConfig, PosteriorDraws, Prior};
use nalgebra::{DMatrix, DVector, Matrix2};

/// Coded-unit truth: depth drives roughness, feed drives power, machine B
/// draws less power.
pub fn reference_truth() -> Truth {
    let rough = [
        -0.20, 0.25, 0.05, -0.04, 0.03, 0.01, 0.01, -0.10, 0.02, 0.01, 0.00, 0.02, -0.01, 0.01,
    ];
    let power = [
        3.60, 0.04, 0.20, 0.05, 0.01, 0.02, 0.01, -0.40, 0.01, 0.03, 0.01, 0.01, 0.00, 0.01,
    ];
    Truth::new(rough, power, Matrix2::new(0.010, 0.002, 0.002, 0.004))
}

pub fn factorial_dataset(truth: &Truth, seed: u64) -> Dataset {
    let f = machining_factors();
    simulate_dataset(truth, &full_factorial(&f), &f, CovariateScale::Coded, seed).unwrap()
}

pub fn design_of(ds: &Dataset) -> SurDesign {
    build_design(ds, CovariateScale::Coded).unwrap()
}

pub fn mcmc(iterations: usize, burn_in: usize, chains: usize, seed: u64) -> McmcConfig {
    McmcConfig {
        iterations,
        burn_in,
        thin: 1,
        chains,
        seed,
    }
}

pub fn fit(ds: &Dataset, config: &McmcConfig) -> PosteriorDraws {
    run_chain(&design_of(ds), &Prior::default(), config).unwrap().draws
}

/// Conditional posterior mean of the stacked coefficients given Σ, from a
/// dense 2n×2n generalized-least-squares solve:
/// `(Xsᵀ W Xs + B0⁻¹)⁻¹ (Xsᵀ W ys + B0⁻¹ b0)`, `W = Σ⁻¹ ⊗ I_n`,
/// stacked by equation.
pub fn gls_posterior_mean(design: &SurDesign, sigma: &Matrix2<f64>, prior: &Prior) -> DVector<f64> {
    let n = design.n();
    let p = design.x.ncols();
    let mut xs = DMatrix::zeros(2 * n, 2 * p);
    let mut ys = DVector::zeros(2 * n);
    for i in 0..n {
        for k in 0..p {
            xs[(i, k)] = design.x[(i, k)];
            xs[(n + i, p + k)] = design.x[(i, k)];
        }
        ys[i] = design.y[(i, 0)];
        ys[n + i] = design.y[(i, 1)];
    }
    let si = sigma.try_inverse().unwrap();
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        w[(i, i)] = si[(0, 0)];
        w[(i, n + i)] = si[(0, 1)];
        w[(n + i, i)] = si[(1, 0)];
        w[(n + i, n + i)] = si[(1, 1)];
    }
    let xtw = xs.transpose() * &w;
    let mut a = &xtw * &xs;
    let mut b = &xtw * &ys;
    for k in 0..2 * p {
        a[(k, k)] += 1.0 / prior.b0_var[k];
        b[k] += prior.b0[k] / prior.b0_var[k];
    }
    a.lu().solve(&b).unwrap()
}

/// Batch-means Monte Carlo standard error of the mean of `x`.
pub fn mcse(x: &[f64]) -> f64 {
    let batches = 50;
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn fit_with(ds: &Dataset, prior: &Prior, config: &McmcConfig) -> PosteriorDraws {
    run_chain(&design_of(ds), prior, config).unwrap().draws
}

/// Default coefficient prior with a nearly vague inverse-Wishart scale, so
/// the error covariance is driven by the data even when it is small.
pub fn weak_sigma_prior() -> Prior {
    let mut p = Prior::default();
    p.s0 = Matrix2::identity() * 1e-4;
    p
}
