//! Posterior summaries: highest-density intervals, coefficient significance,
//! point and predictive predictions, response-surface grids and boxplot
//! statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Coding, Dataset, MachineId, Response};
use crate::design::{build_row, N_COEF, N_EQ, N_TERMS, TERM_NAMES};
use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::stats;

/// Minimum sample count accepted by [`hdi`].
pub const HDI_MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdiInterval {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

impl HdiInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Number of sorted points a window of the given mass must cover.
pub fn hdi_window_len(n: usize, mass: f64) -> usize {
    // The small slack keeps e.g. 0.95 * 100 from rounding up to 96.
    ((mass * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Shortest window of the sorted samples containing `ceil(mass * n)` points.
/// Ties go to the leftmost window.
pub fn hdi(samples: &[f64], mass: f64) -> Result<HdiInterval> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid(format!("HDI mass must be in (0, 1), got {mass}")));
    }
    if samples.len() < HDI_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "HDI needs at least {HDI_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("HDI samples contain NaN"));
    }
    let sorted = stats::sorted(samples);
    let k = hdi_window_len(sorted.len(), mass);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=sorted.len() - k {
        let width = sorted[i + k - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = i;
        }
    }
    Ok(HdiInterval {
        lower: sorted[best],
        upper: sorted[best + k - 1],
        mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSignificance {
    pub response: Response,
    pub term: String,
    pub interval: HdiInterval,
    pub significant: bool,
}

/// Zero lies outside the interval.
pub fn is_significant(interval: &HdiInterval) -> bool {
    !interval.contains(0.0)
}

/// HDI per coefficient and equation, with one row per term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub rows: Vec<CoefficientSignificance>,
}

impl SignificanceTable {
    pub fn get(&self, response: Response, term: &str) -> Option<&CoefficientSignificance> {
        self.rows.iter().find(|r| r.response == response && r.term == term)
    }

    /// One line per term with roughness and power columns side by side.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variable,roughness_hdi_lower,roughness_hdi_upper,roughness_significant,\
             power_hdi_lower,power_hdi_upper,power_significant\n",
        );
        for term in TERM_NAMES {
            let r = self.get(Response::Roughness, term);
            let p = self.get(Response::Power, term);
            if let (Some(r), Some(p)) = (r, p) {
                out.push_str(&format!(
                    "{term},{},{},{},{},{},{}\n",
                    r.interval.lower,
                    r.interval.upper,
                    yes_no(r.significant),
                    p.interval.lower,
                    p.interval.upper,
                    yes_no(p.significant)
                ));
            }
        }
        out
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

pub fn significance_table(draws: &PosteriorDraws, mass: f64) -> Result<SignificanceTable> {
    if draws.is_empty() {
        return Err(Error::InsufficientData("no posterior draws".into()));
    }
    let mut rows = Vec::with_capacity(N_COEF);
    for response in Response::ALL {
        for (k, term) in TERM_NAMES.iter().enumerate() {
            let interval = hdi(&draws.coefficient(response.index() * N_TERMS + k), mass)?;
            rows.push(CoefficientSignificance {
                response,
                term: term.to_string(),
                significant: is_significant(&interval),
                interval,
            });
        }
    }
    Ok(SignificanceTable { rows })
}

/// Roughness and power on the original response scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub roughness: f64,
    pub power: f64,
}

impl Prediction {
    pub fn get(&self, response: Response) -> f64 {
        match response {
            Response::Roughness => self.roughness,
            Response::Power => self.power,
        }
    }
}

/// How point predictions are formed from the log-scale model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Posterior mean of `exp(x'β + σᵢᵢ/2)`, the lognormal mean.
    #[default]
    PosteriorMean,
    /// `exp(x'β̄)`, the median at the posterior-mean coefficients.
    PlugIn,
}

/// Flattened draws for fast repeated evaluation of the prediction surface.
#[derive(Debug, Clone)]
pub struct Predictor {
    coding: Coding,
    /// Per draw: 14 roughness terms, 14 power terms.
    beta: Vec<[f64; N_COEF]>,
    /// Per draw: σ11/2, σ22/2.
    half_var: Vec<[f64; N_EQ]>,
    mean_beta: [f64; N_COEF],
    mode: PredictionMode,
}

impl Predictor {
    pub fn new(draws: &PosteriorDraws, coding: Coding, mode: PredictionMode) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InsufficientData("no posterior draws".into()));
        }
        let beta: Vec<[f64; N_COEF]> = draws
            .beta
            .iter()
            .map(|b| std::array::from_fn(|k| b[k]))
            .collect();
        let half_var = draws
            .sigma
            .iter()
            .map(|s| [0.5 * s[(0, 0)], 0.5 * s[(1, 1)]])
            .collect();
        let mean = draws.mean_beta();
        Ok(Predictor {
            coding,
            beta,
            half_var,
            mean_beta: std::array::from_fn(|k| mean[k]),
            mode,
        })
    }

    pub fn coding(&self) -> &Coding {
        &self.coding
    }

    pub fn n_draws(&self) -> usize {
        self.beta.len()
    }

    /// Prediction at raw factor settings `e`.
    pub fn predict(&self, e: [f64; 3], machine: MachineId) -> Prediction {
        let row = build_row(self.coding.covariates(e), machine);
        match self.mode {
            PredictionMode::PosteriorMean => {
                let mut acc = [0.0; N_EQ];
                for (b, hv) in self.beta.iter().zip(&self.half_var) {
                    acc[0] += (row.dot(&b[..N_TERMS]) + hv[0]).exp();
                    acc[1] += (row.dot(&b[N_TERMS..]) + hv[1]).exp();
                }
                let n = self.beta.len() as f64;
                Prediction {
                    roughness: acc[0] / n,
                    power: acc[1] / n,
                }
            }
            PredictionMode::PlugIn => Prediction {
                roughness: row.dot(&self.mean_beta[..N_TERMS]).exp(),
                power: row.dot(&self.mean_beta[N_TERMS..]).exp(),
            },
        }
    }

    /// Whether any coordinate of `e` lies outside the design bounds.
    pub fn is_extrapolation(&self, e: [f64; 3]) -> bool {
        self.coding
            .params
            .iter()
            .zip(e)
            .any(|(p, v)| p.is_extrapolation(v))
    }
}

/// Posterior-mean lognormal prediction at raw settings `e`.
pub fn predict_point(
    e: [f64; 3],
    machine: MachineId,
    draws: &PosteriorDraws,
    coding: Coding,
) -> Result<Prediction> {
    Ok(Predictor::new(draws, coding, PredictionMode::PosteriorMean)?.predict(e, machine))
}

/// Equal-width histogram of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins && hi > lo { hi } else { lo + i as f64 * width })
            .collect();
        let mut counts = vec![0; bins];
        for &s in samples {
            let idx = (((s - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }

    /// Count normalized so that the histogram integrates to one.
    pub fn density(&self, bin: usize) -> f64 {
        let total: usize = self.counts.iter().sum();
        let width = self.edges[bin + 1] - self.edges[bin];
        if width > 0.0 {
            self.counts[bin] as f64 / (total as f64 * width)
        } else {
            0.0
        }
    }
}

/// Posterior predictive sample at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub point: Prediction,
    pub predictive_draws: Vec<Prediction>,
    /// 95% HDI for roughness and power, in that order.
    pub hdi95: [HdiInterval; 2],
    pub histograms: [Histogram; 2],
}

impl PredictionResult {
    pub fn samples(&self, response: Response) -> Vec<f64> {
        self.predictive_draws.iter().map(|p| p.get(response)).collect()
    }
}

/// Minimum predictive sample size.
pub const MIN_PREDICTIVE_DRAWS: usize = 1000;

/// Lower Cholesky factor of a 2×2 PSD matrix that tolerates zero variances.
fn chol2_psd(s: &nalgebra::Matrix2<f64>) -> [f64; 3] {
    let l11 = s[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { s[(1, 0)] / l11 } else { 0.0 };
    let l22 = (s[(1, 1)] - l21 * l21).max(0.0).sqrt();
    [l11, l21, l22]
}

/// Samples new observations at `e`: draw `i` uses posterior draw
/// `i mod len(draws)`, adds N(0, Σ) noise to the log means and exponentiates.
pub fn posterior_predictive(
    e: [f64; 3],
    machine: MachineId,
    draws: &PosteriorDraws,
    coding: Coding,
    n_pred: usize,
    bins: usize,
    seed: u64,
) -> Result<PredictionResult> {
    if draws.is_empty() {
        return Err(Error::InsufficientData("no posterior draws".into()));
    }
    if n_pred < MIN_PREDICTIVE_DRAWS {
        return Err(Error::invalid(format!(
            "posterior predictive needs at least {MIN_PREDICTIVE_DRAWS} draws, got {n_pred}"
        )));
    }
    let point = predict_point(e, machine, draws, coding)?;
    let row = build_row(coding.covariates(e), machine);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pred);
    for i in 0..n_pred {
        let d = i % draws.len();
        let b = &draws.beta[d];
        let m0 = row.dot(&b.as_slice()[..N_TERMS]);
        let m1 = row.dot(&b.as_slice()[N_TERMS..]);
        let [l11, l21, l22] = chol2_psd(&draws.sigma[d]);
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        out.push(Prediction {
            roughness: (m0 + l11 * z0).exp(),
            power: (m1 + l21 * z0 + l22 * z1).exp(),
        });
    }
    let rough: Vec<f64> = out.iter().map(|p| p.roughness).collect();
    let power: Vec<f64> = out.iter().map(|p| p.power).collect();
    Ok(PredictionResult {
        point,
        hdi95: [hdi(&rough, 0.95)?, hdi(&power, 0.95)?],
        histograms: [Histogram::new(&rough, bins), Histogram::new(&power, bins)],
        predictive_draws: out,
    })
}

/// `|observed - predicted| / observed`, as a fraction.
pub fn relative_error(observed: f64, predicted: f64) -> Result<f64> {
    if !(observed > 0.0) {
        return Err(Error::invalid(format!(
            "relative error needs a positive observed value, got {observed}"
        )));
    }
    Ok((observed - predicted).abs() / observed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub xa: f64,
    pub xb: f64,
    pub roughness: f64,
    pub power: f64,
}

/// `resolution` evenly spaced values from `lo` to `hi`, endpoints exact.
pub fn linspace(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|i| {
            if i + 1 == resolution {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (resolution - 1) as f64
            }
        })
        .collect()
}

/// Predictions over a `resolution × resolution` grid of factors `pair`
/// spanning their design bounds, with the third factor held at `fixed`.
/// Rows are ordered with the first factor varying slowest.
pub fn surface_grid(
    pair: (usize, usize),
    fixed: f64,
    machine: MachineId,
    predictor: &Predictor,
    resolution: usize,
) -> Result<Vec<SurfacePoint>> {
    let (a, b) = pair;
    if a > 2 || b > 2 || a == b {
        return Err(Error::invalid(format!("invalid factor pair ({a}, {b})")));
    }
    if resolution < 2 {
        return Err(Error::invalid("surface resolution must be at least 2"));
    }
    let third = 3 - a - b;
    let params = predictor.coding().params;
    let xs_a = linspace(params[a].lower, params[a].upper, resolution);
    let xs_b = linspace(params[b].lower, params[b].upper, resolution);
    let points: Vec<(f64, f64)> = xs_a
        .iter()
        .flat_map(|&xa| xs_b.iter().map(move |&xb| (xa, xb)))
        .collect();
    Ok(points
        .par_iter()
        .map(|&(xa, xb)| {
            let mut e = [0.0; 3];
            e[a] = xa;
            e[b] = xb;
            e[third] = fixed;
            let p = predictor.predict(e, machine);
            SurfacePoint {
                xa,
                xb,
                roughness: p.roughness,
                power: p.power,
            }
        })
        .collect())
}

/// Five-number summary with Tukey outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    /// Smallest value inside the lower fence.
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Largest value inside the upper fence.
    pub max: f64,
    pub outliers: Vec<f64>,
}

/// Minimum runs per machine for a boxplot.
pub const BOXPLOT_MIN_RUNS: usize = 5;

/// Quartiles by linear interpolation, fences at 1.5·IQR.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.len() < BOXPLOT_MIN_RUNS {
        return Err(Error::InsufficientData(format!(
            "boxplot needs at least {BOXPLOT_MIN_RUNS} values, got {}",
            values.len()
        )));
    }
    let s = stats::sorted(values);
    let q1 = stats::quantile_sorted(&s, 0.25);
    let median = stats::quantile_sorted(&s, 0.5);
    let q3 = stats::quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
    let outliers = s.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    Ok(BoxStats {
        min: inside[0],
        q1,
        median,
        q3,
        max: inside[inside.len() - 1],
        outliers,
    })
}

/// Boxplot statistics of one response for each machine present.
pub fn boxplot_stats(dataset: &Dataset, response: Response) -> Result<Vec<(MachineId, BoxStats)>> {
    MachineId::ALL
        .iter()
        .filter(|m| dataset.runs_for(**m).next().is_some())
        .map(|&m| {
            let values: Vec<f64> = dataset.runs_for(m).map(|r| r.response(response)).collect();
            box_stats(&values)
                .map(|b| (m, b))
                .map_err(|e| Error::InsufficientData(format!("machine {m}: {e}")))
        })
        .collect()
}
