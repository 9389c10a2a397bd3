//! Bayesian ANOVA on log responses.
//!
//! Additive random-effects model
//! `log y = μ + α_D[depth level] + α_A[feed level] + α_V[spindle level] + ε`
//! with `α_f,j ~ N(0, σ_f²)`, `ε ~ N(0, σ_ε²)`, a flat prior on μ and
//! half-Cauchy(1) priors on every standard deviation. A Gibbs sampler updates
//! the location parameters from their normal conditionals and the standard
//! deviations with slice-sampling steps on the log scale.
//!
//! Factor relevance is read from the finite-population standard deviation of
//! each factor's realized effects, computed per draw.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MachineId, Response};
use crate::error::{Error, Result};
use crate::gibbs::McmcConfig;
use crate::stats;

/// Standard deviations are confined to this range. The lower end keeps a
/// perfectly fitted (e.g. constant) response from collapsing to zero.
const LOG_SD_MIN: f64 = -18.420680743952367; // ln(1e-8)
const LOG_SD_MAX: f64 = 18.420680743952367;

/// Minimum draws for interval summaries.
pub const MIN_INTERVAL_DRAWS: usize = 100;

/// The three design factors, labelled D (depth of cut), A (feed rate) and
/// V (spindle rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnovaFactor {
    D,
    A,
    V,
}

impl AnovaFactor {
    pub const ALL: [AnovaFactor; 3] = [AnovaFactor::D, AnovaFactor::A, AnovaFactor::V];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            AnovaFactor::D => "D",
            AnovaFactor::A => "A",
            AnovaFactor::V => "V",
        }
    }
}

impl fmt::Display for AnovaFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnovaScope {
    /// All runs together; optionally with a fixed machine offset.
    Pooled { machine_effect: bool },
    /// Runs of a single machine.
    Machine(MachineId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaConfig {
    pub response: Response,
    pub scope: AnovaScope,
    pub mcmc: McmcConfig,
}

/// Retained draws. `alpha[f]` is draws × k_f.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaDraws {
    pub mu: Vec<f64>,
    /// Offset of machine B, when the pooled model includes one.
    pub machine_effect: Option<Vec<f64>>,
    pub alpha: [DMatrix<f64>; 3],
    pub sigma_factor: [Vec<f64>; 3],
    pub sigma_eps: Vec<f64>,
    pub chain: Vec<usize>,
}

impl AnovaDraws {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Finite-population SD draws and their summaries, ordered D, A, V.
    pub fn finite_pop_sds(&self) -> Result<Vec<FinitePopSd>> {
        AnovaFactor::ALL
            .iter()
            .map(|&f| {
                let draws = finite_pop_sd(&self.alpha[f.index()])?;
                let summary = anova_intervals(&draws)?;
                Ok(FinitePopSd {
                    factor: f,
                    draws,
                    summary,
                })
            })
            .collect()
    }
}

/// Median with central 50% and 95% intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub median: f64,
    pub l50: f64,
    pub u50: f64,
    pub l95: f64,
    pub u95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopSd {
    pub factor: AnovaFactor,
    pub draws: Vec<f64>,
    pub summary: IntervalSummary,
}

/// Standard deviation of the realized effects:
/// `sqrt(αᵀ (I - J/k) α / (k - 1))`.
pub fn finite_pop_sd_single(alpha: &[f64]) -> f64 {
    let k = alpha.len();
    let mean = alpha.iter().sum::<f64>() / k as f64;
    // (I - J/k) is idempotent, so the quadratic form equals the squared norm
    // of the centered vector.
    let ss: f64 = alpha.iter().map(|a| (a - mean) * (a - mean)).sum();
    (ss / (k - 1) as f64).sqrt()
}

/// Applies [`finite_pop_sd_single`] to every row of a draws × k matrix.
pub fn finite_pop_sd(alpha_draws: &DMatrix<f64>) -> Result<Vec<f64>> {
    if alpha_draws.ncols() < 2 {
        return Err(Error::invalid("finite-population SD needs at least two levels"));
    }
    Ok(alpha_draws
        .row_iter()
        .map(|row| {
            let v: Vec<f64> = row.iter().copied().collect();
            finite_pop_sd_single(&v)
        })
        .collect())
}

/// Equal-tailed 50% and 95% intervals plus the median.
pub fn anova_intervals(sd_draws: &[f64]) -> Result<IntervalSummary> {
    if sd_draws.len() < MIN_INTERVAL_DRAWS {
        return Err(Error::InsufficientData(format!(
            "interval summary needs at least {MIN_INTERVAL_DRAWS} draws, got {}",
            sd_draws.len()
        )));
    }
    let s = stats::sorted(sd_draws);
    let q = |p| stats::quantile_sorted(&s, p);
    Ok(IntervalSummary {
        median: q(0.5),
        l50: q(0.25),
        u50: q(0.75),
        l95: q(0.025),
        u95: q(0.975),
    })
}

/// Forest-plot table, one row per factor in D, A, V order.
pub fn forest_csv(sds: &[FinitePopSd]) -> String {
    let mut out = String::from("factor,median,l50,u50,l95,u95\n");
    for f in AnovaFactor::ALL {
        if let Some(sd) = sds.iter().find(|s| s.factor == f) {
            let s = sd.summary;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f, s.median, s.l50, s.u50, s.l95, s.u95
            ));
        }
    }
    out
}

/// Log density of `σ = exp(θ)` under a half-Cauchy(1) prior, given `count`
/// zero-mean normal values with sum of squares `ss`, including the Jacobian.
fn log_sd_density(theta: f64, count: usize, ss: f64) -> f64 {
    let s2 = (2.0 * theta).exp();
    -(count as f64) * theta - ss / (2.0 * s2) - s2.ln_1p() + theta
}

/// One slice-sampling update (stepping out, then shrinkage) on `[lo, hi]`.
fn slice_step<R: Rng + ?Sized>(
    x0: f64,
    logf: impl Fn(f64) -> f64,
    width: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> f64 {
    let f0 = logf(x0);
    let e: f64 = Exp1.sample(rng);
    let level = f0 - e;
    let u: f64 = rng.random();
    let mut left = x0 - width * u;
    let mut right = left + width;
    let mut steps = 0;
    while left > lo && logf(left) > level && steps < 64 {
        left -= width;
        steps += 1;
    }
    steps = 0;
    while right < hi && logf(right) > level && steps < 64 {
        right += width;
        steps += 1;
    }
    left = left.max(lo);
    right = right.min(hi);
    for _ in 0..200 {
        let x1 = left + rng.random::<f64>() * (right - left);
        if logf(x1) > level {
            return x1;
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
    x0
}

struct AnovaData {
    y: Vec<f64>,
    /// Level index of each run for each factor.
    levels: [Vec<usize>; 3],
    k: [usize; 3],
    /// Runs of machine B when a machine offset is modelled.
    machine_b: Option<Vec<bool>>,
}

fn prepare(dataset: &Dataset, config: &AnovaConfig) -> Result<AnovaData> {
    let runs: Vec<_> = match config.scope {
        AnovaScope::Machine(m) => dataset.runs_for(m).copied().collect(),
        AnovaScope::Pooled { .. } => dataset.runs.clone(),
    };
    if runs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ANOVA needs at least two runs, got {}",
            runs.len()
        )));
    }
    let k = [0, 1, 2].map(|f| dataset.factors[f].levels().len());
    let mut levels: [Vec<usize>; 3] = Default::default();
    for run in &runs {
        for f in 0..3 {
            let spec = &dataset.factors[f];
            let idx = spec.level_index(run.x[f]).ok_or_else(|| {
                Error::invalid(format!(
                    "{} = {} is not one of the design levels {:?}",
                    spec.name,
                    run.x[f],
                    spec.levels()
                ))
            })?;
            levels[f].push(idx);
        }
    }
    for f in 0..3 {
        for j in 0..k[f] {
            if !levels[f].contains(&j) {
                return Err(Error::UnobservedLevel {
                    factor: dataset.factors[f].name.clone(),
                    level: dataset.factors[f].levels()[j],
                });
            }
        }
    }
    let machine_b = match config.scope {
        AnovaScope::Pooled {
            machine_effect: true,
        } => {
            let flags: Vec<bool> = runs.iter().map(|r| r.machine == MachineId::B).collect();
            let both = flags.iter().any(|b| *b) && flags.iter().any(|b| !*b);
            both.then_some(flags)
        }
        _ => None,
    };
    Ok(AnovaData {
        y: runs.iter().map(|r| r.response(config.response).ln()).collect(),
        levels,
        k,
        machine_b,
    })
}

struct ChainOut {
    mu: Vec<f64>,
    gamma: Vec<f64>,
    alpha: [Vec<Vec<f64>>; 3],
    sigma_factor: [Vec<f64>; 3],
    sigma_eps: Vec<f64>,
}

fn run_anova_chain(data: &AnovaData, mcmc: &McmcConfig, chain: usize) -> Result<ChainOut> {
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed ^ chain as u64);
    let n = data.y.len();
    let sd_y = stats::variance(&data.y).sqrt();
    let spread = sd_y.max(1e-3);

    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut mu = stats::mean(&data.y) + 0.1 * spread * normal(&mut rng);
    let mut gamma = 0.0;
    let mut alpha: [Vec<f64>; 3] = [0, 1, 2].map(|f| vec![0.0; data.k[f]]);
    let mut sigma_f = [spread; 3];
    let mut sigma_e = spread;

    // r = y - fitted, kept current through every update.
    let mut r: Vec<f64> = data.y.iter().map(|y| y - mu).collect();

    let mut out = ChainOut {
        mu: Vec::new(),
        gamma: Vec::new(),
        alpha: Default::default(),
        sigma_factor: Default::default(),
        sigma_eps: Vec::new(),
    };

    for iteration in 0..mcmc.iterations {
        let var_e = sigma_e * sigma_e;

        let partial_mean = stats::mean(&r) + mu;
        let new_mu = partial_mean + (var_e / n as f64).sqrt() * normal(&mut rng);
        r.iter_mut().for_each(|ri| *ri += mu - new_mu);
        mu = new_mu;

        if let Some(flags) = &data.machine_b {
            let (mut sum, mut count) = (0.0, 0usize);
            for (ri, &b) in r.iter().zip(flags) {
                if b {
                    sum += ri + gamma;
                    count += 1;
                }
            }
            let new_gamma = sum / count as f64 + (var_e / count as f64).sqrt() * normal(&mut rng);
            for (ri, &b) in r.iter_mut().zip(flags) {
                if b {
                    *ri += gamma - new_gamma;
                }
            }
            gamma = new_gamma;
        }

        for f in 0..3 {
            let var_f = sigma_f[f] * sigma_f[f];
            let mut sums = vec![0.0; data.k[f]];
            let mut counts = vec![0usize; data.k[f]];
            for (ri, &j) in r.iter().zip(&data.levels[f]) {
                sums[j] += ri + alpha[f][j];
                counts[j] += 1;
            }
            let mut new_alpha = vec![0.0; data.k[f]];
            for j in 0..data.k[f] {
                let precision = counts[j] as f64 / var_e + 1.0 / var_f;
                let mean = sums[j] / var_e / precision;
                new_alpha[j] = mean + normal(&mut rng) / precision.sqrt();
            }
            for (ri, &j) in r.iter_mut().zip(&data.levels[f]) {
                *ri += alpha[f][j] - new_alpha[j];
            }
            alpha[f] = new_alpha;
        }

        for f in 0..3 {
            let ss: f64 = alpha[f].iter().map(|a| a * a).sum();
            let k = data.k[f];
            let theta = slice_step(
                sigma_f[f].ln(),
                |t| log_sd_density(t, k, ss),
                1.0,
                LOG_SD_MIN,
                LOG_SD_MAX,
                &mut rng,
            );
            sigma_f[f] = theta.exp();
            if !sigma_f[f].is_finite() || sigma_f[f] <= 0.0 {
                return Err(Error::ChainFailure {
                    chain,
                    iteration,
                    source: Box::new(Error::DivergentVariance {
                        parameter: format!("sigma_{}", AnovaFactor::ALL[f]),
                    }),
                });
            }
        }

        let ssr: f64 = r.iter().map(|v| v * v).sum();
        let theta = slice_step(
            sigma_e.ln(),
            |t| log_sd_density(t, n, ssr),
            1.0,
            LOG_SD_MIN,
            LOG_SD_MAX,
            &mut rng,
        );
        sigma_e = theta.exp();
        if !sigma_e.is_finite() || sigma_e <= 0.0 || !mu.is_finite() {
            return Err(Error::ChainFailure {
                chain,
                iteration,
                source: Box::new(Error::DivergentVariance {
                    parameter: "sigma_eps".into(),
                }),
            });
        }

        if iteration >= mcmc.burn_in && (iteration - mcmc.burn_in + 1).is_multiple_of(mcmc.thin) {
            out.mu.push(mu);
            out.gamma.push(gamma);
            for f in 0..3 {
                out.alpha[f].push(alpha[f].clone());
                out.sigma_factor[f].push(sigma_f[f]);
            }
            out.sigma_eps.push(sigma_e);
        }
    }
    Ok(out)
}

/// Fits the additive ANOVA model on the log of the selected response.
pub fn fit_anova(dataset: &Dataset, config: &AnovaConfig) -> Result<AnovaDraws> {
    config.mcmc.validate()?;
    let data = prepare(dataset, config)?;
    let chains = (0..config.mcmc.chains)
        .into_par_iter()
        .map(|c| run_anova_chain(&data, &config.mcmc, c))
        .collect::<Result<Vec<_>>>()?;

    let total: usize = chains.iter().map(|c| c.mu.len()).sum();
    let mut draws = AnovaDraws {
        mu: Vec::with_capacity(total),
        machine_effect: data.machine_b.as_ref().map(|_| Vec::with_capacity(total)),
        alpha: [0, 1, 2].map(|f| DMatrix::zeros(total, data.k[f])),
        sigma_factor: Default::default(),
        sigma_eps: Vec::with_capacity(total),
        chain: Vec::with_capacity(total),
    };
    let mut row = 0;
    for (c, out) in chains.into_iter().enumerate() {
        for i in 0..out.mu.len() {
            for f in 0..3 {
                for (j, a) in out.alpha[f][i].iter().enumerate() {
                    draws.alpha[f][(row, j)] = *a;
                }
            }
            row += 1;
        }
        draws.mu.extend(out.mu);
        if let Some(g) = draws.machine_effect.as_mut() {
            g.extend(out.gamma);
        }
        for f in 0..3 {
            draws.sigma_factor[f].extend(&out.sigma_factor[f]);
        }
        draws.sigma_eps.extend(out.sigma_eps);
        draws.chain.extend(std::iter::repeat_n(c, row - draws.chain.len()));
    }
    Ok(draws)
}
