//! Experimental runs, factor specifications and CSV ingestion.
//!
//! A dataset is a list of machining runs. Each run records which machine it
//! was performed on, the three factor settings (depth of cut, feed rate,
//! spindle rate) in raw units, and the two measured responses (surface
//! roughness and power consumption). Both responses must be strictly positive
//! because the model works with their logarithms.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{build_row, N_COEF, N_TERMS};
use crate::error::{Error, Result};

/// CSV header of the dataset file format.
pub const DATASET_HEADER: [&str; 6] = ["machine", "x1", "x2", "x3", "roughness", "power"];

/// Relative slack allowed when checking factor values against design bounds,
/// so that values printed with fewer digits still validate.
const BOUND_TOLERANCE: f64 = 1e-9;

/// One controllable factor and its experimental levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub units: String,
    levels: Vec<f64>,
}

impl FactorSpec {
    /// Levels must be finite, positive and strictly ascending; at least two.
    pub fn new(name: impl Into<String>, units: impl Into<String>, levels: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if levels.len() < 2 {
            return Err(Error::invalid(format!("factor {name}: need at least two levels")));
        }
        if levels.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::invalid(format!(
                "factor {name}: levels must be finite and positive"
            )));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "factor {name}: levels must be strictly ascending"
            )));
        }
        Ok(FactorSpec {
            name,
            units: units.into(),
            levels,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn lower_bound(&self) -> f64 {
        self.levels[0]
    }

    pub fn upper_bound(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    pub fn coding(&self) -> CodingParams {
        CodingParams::from_bounds(self.lower_bound(), self.upper_bound())
    }

    /// Index of the level equal to `value` (up to a relative 1e-9), if any.
    pub fn level_index(&self, value: f64) -> Option<usize> {
        self.levels
            .iter()
            .position(|l| (l - value).abs() <= BOUND_TOLERANCE * l.abs().max(1.0))
    }

    fn contains(&self, value: f64) -> bool {
        let slack = BOUND_TOLERANCE * self.upper_bound().abs().max(1.0);
        value >= self.lower_bound() - slack && value <= self.upper_bound() + slack
    }
}

/// The three factors of the machining design with five levels each:
/// depth of cut (mm), feed rate (mm/min) and spindle rate (RPM).
pub fn machining_factors() -> [FactorSpec; 3] {
    [
        FactorSpec::new("depth_of_cut", "mm", vec![1.0, 1.5, 2.0, 2.5, 3.0]),
        FactorSpec::new("feed_rate", "mm/min", vec![134.0, 167.5, 201.0, 234.5, 268.0]),
        FactorSpec::new("spindle_rate", "RPM", vec![950.0, 1187.5, 1425.0, 1662.5, 1900.0]),
    ]
    .map(|f| f.expect("built-in factor levels are valid"))
}

/// Machining center. `A` is the reference level of the machine dummy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MachineId {
    A,
    B,
}

impl MachineId {
    pub const ALL: [MachineId; 2] = [MachineId::A, MachineId::B];

    /// Value of the machine indicator in the regressor row.
    pub fn dummy(self) -> f64 {
        match self {
            MachineId::A => 0.0,
            MachineId::B => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            MachineId::A => "A",
            MachineId::B => "B",
        }
    }
}

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MachineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" => Ok(MachineId::A),
            "B" => Ok(MachineId::B),
            other => Err(Error::UnknownMachine {
                row: 0,
                tag: other.to_string(),
            }),
        }
    }
}

/// The two measured responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Roughness,
    Power,
}

impl Response {
    pub const ALL: [Response; 2] = [Response::Roughness, Response::Power];

    pub fn name(self) -> &'static str {
        match self {
            Response::Roughness => "roughness",
            Response::Power => "power",
        }
    }

    /// Column of this response in the stacked model (0 = roughness, 1 = power).
    pub fn index(self) -> usize {
        match self {
            Response::Roughness => 0,
            Response::Power => 1,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Response {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "roughness" => Ok(Response::Roughness),
            "power" => Ok(Response::Power),
            other => Err(Error::invalid(format!("unknown response {other:?}"))),
        }
    }
}

/// A single machining run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentalRun {
    pub machine: MachineId,
    /// Depth of cut, feed rate, spindle rate in raw units.
    pub x: [f64; 3],
    pub roughness: f64,
    pub power: f64,
}

impl ExperimentalRun {
    pub fn response(&self, response: Response) -> f64 {
        match response {
            Response::Roughness => self.roughness,
            Response::Power => self.power,
        }
    }
}

/// Linear map of one factor onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingParams {
    pub center: f64,
    pub half_range: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CodingParams {
    pub fn from_bounds(lower: f64, upper: f64) -> Self {
        CodingParams {
            center: 0.5 * (lower + upper),
            half_range: 0.5 * (upper - lower),
            lower,
            upper,
        }
    }

    pub fn code(&self, value: f64) -> f64 {
        code_factor(value, self)
    }

    pub fn decode(&self, coded: f64) -> f64 {
        self.center + coded * self.half_range
    }

    /// True when `value` lies outside the design bounds.
    pub fn is_extrapolation(&self, value: f64) -> bool {
        value < self.lower || value > self.upper
    }
}

/// `(value - center) / half_range`. Values outside the design range map
/// outside [-1, 1]; callers flag those as extrapolation.
pub fn code_factor(value: f64, params: &CodingParams) -> f64 {
    (value - params.center) / params.half_range
}

/// Whether covariates enter the model coded to [-1, 1] or in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateScale {
    #[default]
    Coded,
    Raw,
}

/// Everything needed to turn raw factor settings into model covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coding {
    pub params: [CodingParams; 3],
    pub scale: CovariateScale,
}

impl Coding {
    pub fn new(factors: &[FactorSpec; 3], scale: CovariateScale) -> Self {
        Coding {
            params: [factors[0].coding(), factors[1].coding(), factors[2].coding()],
            scale,
        }
    }

    pub fn covariates(&self, x: [f64; 3]) -> [f64; 3] {
        match self.scale {
            CovariateScale::Coded => [
                self.params[0].code(x[0]),
                self.params[1].code(x[1]),
                self.params[2].code(x[2]),
            ],
            CovariateScale::Raw => x,
        }
    }

    pub fn lower(&self) -> [f64; 3] {
        self.params.map(|p| p.lower)
    }

    pub fn upper(&self) -> [f64; 3] {
        self.params.map(|p| p.upper)
    }
}

/// A validated set of runs together with its factor definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub runs: Vec<ExperimentalRun>,
    pub factors: [FactorSpec; 3],
    pub coding: [CodingParams; 3],
}

impl Dataset {
    /// Validates every run against the factor bounds and response positivity.
    pub fn new(runs: Vec<ExperimentalRun>, factors: [FactorSpec; 3]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InsufficientData("dataset has no runs".into()));
        }
        for (i, run) in runs.iter().enumerate() {
            validate_run(run, &factors, i + 1)?;
        }
        let coding = [factors[0].coding(), factors[1].coding(), factors[2].coding()];
        Ok(Dataset {
            runs,
            factors,
            coding,
        })
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn coding(&self, scale: CovariateScale) -> Coding {
        Coding {
            params: self.coding,
            scale,
        }
    }

    pub fn runs_for(&self, machine: MachineId) -> impl Iterator<Item = &ExperimentalRun> {
        self.runs.iter().filter(move |r| r.machine == machine)
    }

    /// Subset restricted to one machine. Errors when that machine has no runs.
    pub fn for_machine(&self, machine: MachineId) -> Result<Dataset> {
        let runs: Vec<_> = self.runs_for(machine).copied().collect();
        if runs.is_empty() {
            return Err(Error::InsufficientData(format!("no runs for machine {machine}")));
        }
        Ok(Dataset {
            runs,
            factors: self.factors.clone(),
            coding: self.coding,
        })
    }

    /// Serializes in the CSV format accepted by [`parse_dataset`].
    pub fn to_csv(&self) -> String {
        let mut out = DATASET_HEADER.join(",");
        out.push('\n');
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.machine, r.x[0], r.x[1], r.x[2], r.roughness, r.power
            ));
        }
        out
    }
}

fn validate_run(run: &ExperimentalRun, factors: &[FactorSpec; 3], row: usize) -> Result<()> {
    for (column, value) in [("roughness", run.roughness), ("power", run.power)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveResponse { row, column, value });
        }
    }
    for (spec, &value) in factors.iter().zip(&run.x) {
        if !value.is_finite() || !spec.contains(value) {
            return Err(Error::OutOfBounds {
                row,
                factor: spec.name.clone(),
                value,
                lower: spec.lower_bound(),
                upper: spec.upper_bound(),
            });
        }
    }
    Ok(())
}

/// Parses a dataset from CSV text with header
/// `machine,x1,x2,x3,roughness,power`. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn parse_dataset(csv_text: &str, factors: &[FactorSpec; 3]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().ne(DATASET_HEADER.iter().copied()) {
        return Err(Error::BadHeader {
            expected: DATASET_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut runs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let machine = record[0].parse::<MachineId>().map_err(|_| Error::UnknownMachine {
            row,
            tag: record[0].to_string(),
        })?;
        let mut values = [0.0; 5];
        for (k, v) in values.iter_mut().enumerate() {
            let field = &record[k + 1];
            *v = field.parse::<f64>().map_err(|_| Error::MalformedRow {
                row,
                message: format!("column {}: cannot parse {field:?} as a number", DATASET_HEADER[k + 1]),
            })?;
        }
        let run = ExperimentalRun {
            machine,
            x: [values[0], values[1], values[2]],
            roughness: values[3],
            power: values[4],
        };
        validate_run(&run, factors, row)?;
        runs.push(run);
    }
    Dataset::new(runs, factors.clone())
}

/// A design point: machine plus raw factor settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint {
    pub machine: MachineId,
    pub x: [f64; 3],
}

/// Full factorial over all factor levels for both machines, machine A first,
/// then depth, feed and spindle varying slowest to fastest.
pub fn full_factorial(factors: &[FactorSpec; 3]) -> Vec<DesignPoint> {
    let mut points = Vec::new();
    for machine in MachineId::ALL {
        for &x1 in factors[0].levels() {
            for &x2 in factors[1].levels() {
                for &x3 in factors[2].levels() {
                    points.push(DesignPoint {
                        machine,
                        x: [x1, x2, x3],
                    });
                }
            }
        }
    }
    points
}

/// Parses a design list with header `machine,x1,x2,x3`.
pub fn parse_design(csv_text: &str) -> Result<Vec<DesignPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let expected = ["machine", "x1", "x2", "x3"];
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::BadHeader {
            expected: expected.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let machine = record[0].parse::<MachineId>().map_err(|_| Error::UnknownMachine {
            row,
            tag: record[0].to_string(),
        })?;
        let mut x = [0.0; 3];
        for (k, v) in x.iter_mut().enumerate() {
            *v = record[k + 1].parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("cannot parse {:?} as a number", &record[k + 1]),
            })?;
        }
        points.push(DesignPoint { machine, x });
    }
    Ok(points)
}

/// Known generating parameters for synthetic data: 28 stacked coefficients
/// (roughness equation first) and the 2x2 error covariance of the log responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub beta: SVector<f64, N_COEF>,
    pub sigma: Matrix2<f64>,
}

impl Truth {
    pub fn new(roughness: [f64; N_TERMS], power: [f64; N_TERMS], sigma: Matrix2<f64>) -> Self {
        let mut beta = SVector::<f64, N_COEF>::zeros();
        for k in 0..N_TERMS {
            beta[k] = roughness[k];
            beta[N_TERMS + k] = power[k];
        }
        Truth { beta, sigma }
    }

    /// Mean of the log responses (roughness, power) at the given covariates.
    pub fn log_mean(&self, covariates: [f64; 3], machine: MachineId) -> [f64; 2] {
        let row = build_row(covariates, machine);
        let mut mean = [0.0; 2];
        for (eq, m) in mean.iter_mut().enumerate() {
            *m = (0..N_TERMS).map(|k| row.0[k] * self.beta[eq * N_TERMS + k]).sum();
        }
        mean
    }
}

/// Draws log responses from `N(x'beta, sigma)` at each design point and
/// exponentiates them. Deterministic for a given seed.
pub fn simulate_dataset(
    truth: &Truth,
    design: &[DesignPoint],
    factors: &[FactorSpec; 3],
    scale: CovariateScale,
    seed: u64,
) -> Result<Dataset> {
    if design.is_empty() {
        return Err(Error::invalid("design list is empty"));
    }
    if (truth.sigma[(0, 1)] - truth.sigma[(1, 0)]).abs() > 1e-12 * truth.sigma.abs().max() {
        return Err(Error::NotSpd("error covariance is not symmetric".into()));
    }
    let chol = truth
        .sigma
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("error covariance {:?}", truth.sigma.as_slice())))?;
    let l = chol.l();
    let coding = Coding::new(factors, scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::with_capacity(design.len());
    for (i, point) in design.iter().enumerate() {
        let mean = truth.log_mean(coding.covariates(point.x), point.machine);
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let e0 = l[(0, 0)] * z0;
        let e1 = l[(1, 0)] * z0 + l[(1, 1)] * z1;
        let run = ExperimentalRun {
            machine: point.machine,
            x: point.x,
            roughness: (mean[0] + e0).exp(),
            power: (mean[1] + e1).exp(),
        };
        validate_run(&run, factors, i + 1)?;
        runs.push(run);
    }
    Dataset::new(runs, factors.clone())
}
