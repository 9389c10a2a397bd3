//! Gibbs sampler for the bivariate seemingly-unrelated-regressions model.
//!
//! The model is `log y_t = B' x_t + e_t` with `e_t ~ N(0, Σ)` for the two
//! responses, independent normal priors on the 28 stacked coefficients and an
//! inverse-Wishart prior on Σ. Both full conditionals are conjugate:
//!
//! - β | Σ is multivariate normal with precision `B0⁻¹ + Σ⁻¹ ⊗ XᵀX`. Because
//!   both equations share the regressor matrix, the precision is assembled
//!   from the 2×2 blocks of Σ⁻¹ and one precomputed 14×14 `XᵀX`.
//! - Σ | β is inverse-Wishart with `nu0 + n` degrees of freedom and scale
//!   `S0 + EᵀE`, where `E` holds the residuals of both equations. Draws use
//!   the Bartlett decomposition of the matching Wishart.

use nalgebra::{Cholesky, Const, DMatrix, Matrix2, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{SurDesign, N_COEF, N_EQ, N_TERMS};
use crate::error::{Error, Result};
use crate::stats;

pub type Coefs = SVector<f64, N_COEF>;

/// Split R-hat above this value produces a convergence warning.
pub const RHAT_WARNING: f64 = 1.1;

/// Normal prior on the stacked coefficients and inverse-Wishart prior on Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub b0: Coefs,
    /// Prior variances (diagonal of the prior covariance).
    pub b0_var: Coefs,
    pub nu0: f64,
    pub s0: Matrix2<f64>,
}

impl Default for Prior {
    /// Zero mean, variance 100, `nu0 = 4`, `S0 = I`.
    fn default() -> Self {
        Prior::vague(100.0)
    }
}

impl Prior {
    pub fn vague(variance: f64) -> Self {
        Prior {
            b0: Coefs::zeros(),
            b0_var: Coefs::from_element(variance),
            nu0: 4.0,
            s0: Matrix2::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b0_var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("prior variances must be positive and finite"));
        }
        if self.b0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prior mean must be finite"));
        }
        if !(self.nu0 > (N_EQ - 1) as f64) {
            return Err(Error::invalid(format!(
                "inverse-Wishart degrees of freedom must exceed {}, got {}",
                N_EQ - 1,
                self.nu0
            )));
        }
        check_spd(&self.s0, "prior scale S0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 6000,
            burn_in: 1000,
            thin: 1,
            chains: 4,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn retained_per_chain(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn retained(&self) -> usize {
        self.chains * self.retained_per_chain()
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::invalid("at least one chain is required"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "no retained draws: burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.retained() < 100 {
            return Err(Error::invalid(format!(
                "configuration retains {} draws, at least 100 are required",
                self.retained()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_spd(m: &Matrix2<f64>, what: &str) -> Result<()> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let symmetric = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.abs().max().max(1e-300);
    if m.iter().all(|v| v.is_finite()) && symmetric && m[(0, 0)] > 0.0 && m[(1, 1)] > 0.0 && det > 0.0
    {
        Ok(())
    } else {
        Err(Error::NotSpd(format!(
            "{what} = [[{}, {}], [{}, {}]]",
            m[(0, 0)],
            m[(0, 1)],
            m[(1, 0)],
            m[(1, 1)]
        )))
    }
}

/// Draws from InverseWishart(`dof`, `scale`) for 2×2 matrices.
///
/// Samples `W ~ Wishart(dof, scale⁻¹)` through its Bartlett factor
/// `W = (L A)(L A)ᵀ` and returns `W⁻¹`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    scale: &Matrix2<f64>,
    dof: f64,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    check_spd(scale, "inverse-Wishart scale")?;
    if !(dof > (N_EQ - 1) as f64) {
        return Err(Error::invalid(format!("inverse-Wishart dof {dof} too small")));
    }
    let inv = scale
        .try_inverse()
        .ok_or_else(|| Error::NotSpd("inverse-Wishart scale is singular".into()))?;
    let l = inv
        .cholesky()
        .ok_or_else(|| Error::NotSpd("inverse of the inverse-Wishart scale".into()))?
        .unpack();
    let c1: f64 = ChiSquared::new(dof).expect("dof > 1").sample(rng);
    let c2: f64 = ChiSquared::new(dof - 1.0).expect("dof > 1").sample(rng);
    let z: f64 = StandardNormal.sample(rng);
    let a = Matrix2::new(c1.sqrt(), 0.0, z, c2.sqrt());
    let m = l * a;
    // m is lower triangular, invert it directly.
    let m_inv = Matrix2::new(
        1.0 / m[(0, 0)],
        0.0,
        -m[(1, 0)] / (m[(0, 0)] * m[(1, 1)]),
        1.0 / m[(1, 1)],
    );
    let sigma = m_inv.transpose() * m_inv;
    let sigma = 0.5 * (sigma + sigma.transpose());
    check_spd(&sigma, "inverse-Wishart draw")?;
    Ok(sigma)
}

/// The normal full conditional of β given Σ.
pub struct BetaConditional {
    pub mean: Coefs,
    /// Lower Cholesky factor of the posterior precision.
    precision_factor: SMatrix<f64, N_COEF, N_COEF>,
}

impl BetaConditional {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Coefs {
        let z = Coefs::from_fn(|_, _| StandardNormal.sample(rng));
        // mean + L⁻ᵀ z has covariance (L Lᵀ)⁻¹.
        let offset = self
            .precision_factor
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        self.mean + offset
    }

    /// Posterior covariance of β given Σ.
    pub fn covariance(&self) -> SMatrix<f64, N_COEF, N_COEF> {
        let l_inv = self
            .precision_factor
            .solve_lower_triangular(&SMatrix::identity())
            .expect("Cholesky factor has a positive diagonal");
        l_inv.transpose() * l_inv
    }
}

/// Precomputed sufficient statistics for repeated conditional draws.
pub struct SurSampler<'a> {
    design: &'a SurDesign,
    xtx: SMatrix<f64, N_TERMS, N_TERMS>,
    xty: SMatrix<f64, N_TERMS, N_EQ>,
    prior_precision: Coefs,
    prior_shift: Coefs,
    nu0: f64,
    s0: Matrix2<f64>,
}

impl<'a> SurSampler<'a> {
    pub fn new(design: &'a SurDesign, prior: &Prior) -> Result<Self> {
        prior.validate()?;
        if design.x.ncols() != N_TERMS || design.y.ncols() != N_EQ || design.x.nrows() != design.y.nrows()
        {
            return Err(Error::invalid("design must be n×14 regressors with n×2 responses"));
        }
        let prior_precision = prior.b0_var.map(|v| 1.0 / v);
        Ok(SurSampler {
            design,
            xtx: design.xtx(),
            xty: design.xty(),
            prior_precision,
            prior_shift: prior.b0.component_mul(&prior_precision),
            nu0: prior.nu0,
            s0: prior.s0,
        })
    }

    pub fn design(&self) -> &SurDesign {
        self.design
    }

    pub fn beta_conditional(&self, sigma: &Matrix2<f64>) -> Result<BetaConditional> {
        check_spd(sigma, "Σ")?;
        let omega = sigma
            .try_inverse()
            .ok_or_else(|| Error::NotSpd("Σ is singular".into()))?;
        let mut precision = SMatrix::<f64, N_COEF, N_COEF>::zeros();
        let mut rhs = self.prior_shift;
        for i in 0..N_EQ {
            for j in 0..N_EQ {
                let w = omega[(i, j)];
                precision
                    .fixed_view_mut::<N_TERMS, N_TERMS>(i * N_TERMS, j * N_TERMS)
                    .copy_from(&(self.xtx * w));
                let mut seg = rhs.fixed_rows_mut::<N_TERMS>(i * N_TERMS);
                seg += self.xty.column(j) * w;
            }
        }
        for k in 0..N_COEF {
            precision[(k, k)] += self.prior_precision[k];
        }
        let chol: Cholesky<f64, Const<N_COEF>> = match Cholesky::new(precision) {
            Some(c) => c,
            None => {
                let eig = precision.symmetric_eigenvalues();
                let (lo, hi) = (eig.min(), eig.max());
                let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                return Err(Error::SingularPrecision { condition });
            }
        };
        let mean = chol.solve(&rhs);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularPrecision {
                condition: f64::INFINITY,
            });
        }
        Ok(BetaConditional {
            mean,
            precision_factor: chol.unpack(),
        })
    }

    pub fn sample_beta<R: Rng + ?Sized>(&self, sigma: &Matrix2<f64>, rng: &mut R) -> Result<Coefs> {
        Ok(self.beta_conditional(sigma)?.sample(rng))
    }

    /// `EᵀE` for the residuals of both equations at `beta`.
    pub fn residual_cross_product(&self, beta: &Coefs) -> Matrix2<f64> {
        let x = &self.design.x;
        let y = &self.design.y;
        let mut acc = Matrix2::zeros();
        for i in 0..x.nrows() {
            let mut pred = [0.0; N_EQ];
            for k in 0..N_TERMS {
                let xik = x[(i, k)];
                pred[0] += xik * beta[k];
                pred[1] += xik * beta[N_TERMS + k];
            }
            let e0 = y[(i, 0)] - pred[0];
            let e1 = y[(i, 1)] - pred[1];
            acc[(0, 0)] += e0 * e0;
            acc[(0, 1)] += e0 * e1;
            acc[(1, 1)] += e1 * e1;
        }
        acc[(1, 0)] = acc[(0, 1)];
        acc
    }

    pub fn sample_sigma<R: Rng + ?Sized>(&self, beta: &Coefs, rng: &mut R) -> Result<Matrix2<f64>> {
        let scale = self.s0 + self.residual_cross_product(beta);
        sample_inverse_wishart(&scale, self.nu0 + self.design.n() as f64, rng)
    }

    /// Per-equation least squares (minimum-norm when X is rank deficient).
    pub fn least_squares(&self) -> Coefs {
        let svd = self.design.x.clone().svd(true, true);
        let sol: DMatrix<f64> = svd
            .solve(&self.design.y, 1e-10)
            .unwrap_or_else(|_| DMatrix::zeros(N_TERMS, N_EQ));
        Coefs::from_fn(|k, _| sol[(k % N_TERMS, k / N_TERMS)])
    }
}

/// One β | Σ draw for the given design and prior.
pub fn sample_beta_given_sigma<R: Rng + ?Sized>(
    design: &SurDesign,
    sigma: &Matrix2<f64>,
    prior: &Prior,
    rng: &mut R,
) -> Result<Coefs> {
    SurSampler::new(design, prior)?.sample_beta(sigma, rng)
}

/// One Σ | β draw for the given design and prior.
pub fn sample_sigma_given_beta<R: Rng + ?Sized>(
    design: &SurDesign,
    beta: &Coefs,
    prior: &Prior,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    SurSampler::new(design, prior)?.sample_sigma(beta, rng)
}

/// Retained MCMC draws. Stacked β (roughness terms 0–13, power 14–27) and Σ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosteriorDraws {
    pub beta: Vec<Coefs>,
    pub sigma: Vec<Matrix2<f64>>,
    pub chain: Vec<usize>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn push(&mut self, beta: Coefs, sigma: Matrix2<f64>, chain: usize) {
        self.beta.push(beta);
        self.sigma.push(sigma);
        self.chain.push(chain);
    }

    /// Number of distinct chains, assuming ids 0..k.
    pub fn n_chains(&self) -> usize {
        self.chain.iter().max().map_or(0, |m| m + 1)
    }

    pub fn coefficient(&self, k: usize) -> Vec<f64> {
        self.beta.iter().map(|b| b[k]).collect()
    }

    /// Σ entries as stored in the CSV: 0 = σ11, 1 = σ22, 2 = σ12.
    pub fn sigma_entry(&self, which: usize) -> Vec<f64> {
        let (i, j) = [(0, 0), (1, 1), (0, 1)][which];
        self.sigma.iter().map(|s| s[(i, j)]).collect()
    }

    /// Values of parameter `p` (0–27 β, 28–30 Σ) grouped by chain.
    pub fn by_chain(&self, p: usize) -> Vec<Vec<f64>> {
        let values = if p < N_COEF {
            self.coefficient(p)
        } else {
            self.sigma_entry(p - N_COEF)
        };
        let mut out = vec![Vec::new(); self.n_chains()];
        for (v, &c) in values.iter().zip(&self.chain) {
            out[c].push(*v);
        }
        out
    }

    pub fn mean_beta(&self) -> Coefs {
        self.beta.iter().fold(Coefs::zeros(), |acc, b| acc + b) / self.len() as f64
    }

    /// Every `step`-th draw, keeping chain labels.
    pub fn thinned(&self, step: usize) -> PosteriorDraws {
        let mut out = PosteriorDraws::default();
        for i in (0..self.len()).step_by(step.max(1)) {
            out.push(self.beta[i], self.sigma[i], self.chain[i]);
        }
        out
    }

    pub fn column_names() -> Vec<String> {
        let mut names = Vec::with_capacity(N_COEF + 3);
        for eq in 1..=N_EQ {
            for k in 0..N_TERMS {
                names.push(format!("b{eq}_{k}"));
            }
        }
        names.extend(["sigma11", "sigma22", "sigma12"].map(String::from));
        names
    }

    /// Flat CSV: `draw,chain`, 28 β columns, then σ11, σ22, σ12.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("draw,chain,");
        out.push_str(&Self::column_names().join(","));
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{},{}", i, self.chain[i]));
            for v in self.beta[i].iter() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            let s = &self.sigma[i];
            out.push_str(&format!(",{},{},{}\n", s[(0, 0)], s[(1, 1)], s[(0, 1)]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::MalformedRow {
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let mut expected = vec!["draw".to_string(), "chain".to_string()];
        expected.extend(Self::column_names());
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::BadHeader {
                expected: expected.join(","),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut draws = PosteriorDraws::default();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::MalformedRow {
                row,
                message: e.to_string(),
            })?;
            let parse = |k: usize| -> Result<f64> {
                record[k].parse::<f64>().map_err(|_| Error::MalformedRow {
                    row,
                    message: format!("column {}: cannot parse {:?}", expected[k], &record[k]),
                })
            };
            let chain = record[1].parse::<usize>().map_err(|_| Error::MalformedRow {
                row,
                message: format!("bad chain id {:?}", &record[1]),
            })?;
            let mut beta = Coefs::zeros();
            for k in 0..N_COEF {
                beta[k] = parse(k + 2)?;
            }
            let s11 = parse(N_COEF + 2)?;
            let s22 = parse(N_COEF + 3)?;
            let s12 = parse(N_COEF + 4)?;
            let sigma = Matrix2::new(s11, s12, s12, s22);
            check_spd(&sigma, &format!("Σ on row {row}"))?;
            draws.push(beta, sigma, chain);
        }
        if draws.is_empty() {
            return Err(Error::InsufficientData("draws file has no rows".into()));
        }
        Ok(draws)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

/// Split R-hat and effective sample size for every sampled parameter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub parameters: Vec<ParameterDiagnostic>,
}

impl ConvergenceReport {
    pub fn from_draws(draws: &PosteriorDraws) -> Self {
        let names = PosteriorDraws::column_names();
        let parameters = (0..N_COEF + 3)
            .map(|p| {
                let chains = draws.by_chain(p);
                ParameterDiagnostic {
                    name: names[p].clone(),
                    rhat: split_rhat(&chains),
                    ess: effective_sample_size(&chains),
                }
            })
            .collect();
        ConvergenceReport { parameters }
    }

    pub fn max_rhat(&self) -> f64 {
        self.parameters.iter().map(|p| p.rhat).fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.parameters.iter().map(|p| p.ess).fold(f64::NAN, f64::min)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.parameters
            .iter()
            .filter(|p| p.rhat > RHAT_WARNING)
            .map(|p| format!("{}: split R-hat {:.4} exceeds {RHAT_WARNING}", p.name, p.rhat))
            .collect()
    }
}

fn split_sequences(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut seqs = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        seqs.push(&c[..half]);
        seqs.push(&c[c.len() - half..]);
    }
    seqs
}

/// Between/within summary of equal-length sequences: (n, W, var⁺).
fn variance_components(seqs: &[&[f64]]) -> Option<(usize, Vec<f64>, f64, f64)> {
    let n = seqs.first()?.len();
    if n < 2 || seqs.len() < 2 || seqs.iter().any(|s| s.len() != n) {
        return None;
    }
    let means: Vec<f64> = seqs.iter().map(|s| stats::mean(s)).collect();
    let within = seqs.iter().map(|s| stats::variance(s)).sum::<f64>() / seqs.len() as f64;
    let between_over_n = stats::variance(&means);
    let var_plus = (n - 1) as f64 / n as f64 * within + between_over_n;
    Some((n, means, within, var_plus))
}

/// Split R-hat over chains of equal length. Returns 1 for constant draws and
/// NaN when there is too little data.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let seqs = split_sequences(chains);
    match variance_components(&seqs) {
        None => f64::NAN,
        Some((_, _, within, var_plus)) => {
            if within <= 0.0 {
                if var_plus <= 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                (var_plus / within).sqrt()
            }
        }
    }
}

/// Multi-chain effective sample size on split chains, with Geyer's initial
/// monotone sequence truncation of the autocorrelation sum.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let seqs = split_sequences(chains);
    let Some((n, means, within, var_plus)) = variance_components(&seqs) else {
        return f64::NAN;
    };
    let total = (n * seqs.len()) as f64;
    if var_plus <= 0.0 || within <= 0.0 {
        return total;
    }
    let rho = |t: usize| -> f64 {
        let mut mean_acov = 0.0;
        for (s, m) in seqs.iter().zip(&means) {
            let acov: f64 = (0..n - t).map(|i| (s[i] - m) * (s[i + t] - m)).sum::<f64>() / n as f64;
            mean_acov += acov;
        }
        mean_acov /= seqs.len() as f64;
        1.0 - (within - mean_acov) / var_plus
    };
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / total.log10());
    total / tau
}

/// Output of a multi-chain fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SurFit {
    pub draws: PosteriorDraws,
    pub convergence: ConvergenceReport,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ chain as u64)
}

fn keep(iteration: usize, config: &McmcConfig) -> bool {
    iteration >= config.burn_in && (iteration - config.burn_in + 1).is_multiple_of(config.thin)
}

fn single_chain(
    sampler: &SurSampler<'_>,
    start: &Coefs,
    config: &McmcConfig,
    chain: usize,
) -> Result<PosteriorDraws> {
    let mut rng = chain_rng(config.seed, chain);
    let mut beta = start.map(|b| b + 0.1 * rng.sample::<f64, _>(StandardNormal));
    let mut out = PosteriorDraws::default();
    for iteration in 0..config.iterations {
        let wrap = |e: Error| Error::ChainFailure {
            chain,
            iteration,
            source: Box::new(e),
        };
        let sigma = sampler.sample_sigma(&beta, &mut rng).map_err(wrap)?;
        beta = sampler.sample_beta(&sigma, &mut rng).map_err(wrap)?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(wrap(Error::SingularPrecision {
                condition: f64::INFINITY,
            }));
        }
        if keep(iteration, config) {
            out.push(beta, sigma, chain);
        }
    }
    Ok(out)
}

fn merge(parts: Vec<PosteriorDraws>) -> PosteriorDraws {
    let mut draws = PosteriorDraws::default();
    for part in parts {
        draws.beta.extend(part.beta);
        draws.sigma.extend(part.sigma);
        draws.chain.extend(part.chain);
    }
    draws
}

/// Runs `config.chains` independent Gibbs chains (in parallel), each started at
/// the least-squares estimate plus N(0, 0.01) jitter, and merges the retained
/// draws in chain order. Chain `c` uses seed `config.seed ^ c`.
pub fn run_chain(design: &SurDesign, prior: &Prior, config: &McmcConfig) -> Result<SurFit> {
    config.validate()?;
    let sampler = SurSampler::new(design, prior)?;
    let start = sampler.least_squares();
    let parts = (0..config.chains)
        .into_par_iter()
        .map(|c| single_chain(&sampler, &start, config, c))
        .collect::<Result<Vec<_>>>()?;
    let draws = merge(parts);
    let convergence = ConvergenceReport::from_draws(&draws);
    Ok(SurFit { draws, convergence })
}

/// β-only sampling with Σ held fixed; draws are independent across iterations.
pub fn run_fixed_sigma(
    design: &SurDesign,
    sigma: &Matrix2<f64>,
    prior: &Prior,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let sampler = SurSampler::new(design, prior)?;
    let conditional = sampler.beta_conditional(sigma)?;
    let parts = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(config.seed, c);
            let mut out = PosteriorDraws::default();
            for iteration in 0..config.iterations {
                let beta = conditional.sample(&mut rng);
                if keep(iteration, config) {
                    out.push(beta, *sigma, c);
                }
            }
            out
        })
        .collect();
    Ok(merge(parts))
}
