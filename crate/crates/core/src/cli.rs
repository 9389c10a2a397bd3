//! Configuration file, command implementations and artifact writing for the
//! `machopt` binary.
//!
//! A run is described by one TOML file. Keys can be overridden on the command
//! line with `--set section.key=value` (the value is parsed as TOML, falling
//! back to a plain string). `MACHOPT_OUTPUT_DIR`, when set, replaces
//! `paths.output_dir`; `--set` still wins over it.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Every command writes `manifest_<command>.json` into the output directory
//! with the effective configuration, its SHA-256, and the SHA-256 of every
//! input read and output written. All files are written atomically.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numerical
//! failure, 4 missing prerequisite artifact, 1 other I/O failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    boxplot_stats, posterior_predictive, relative_error, significance_table, surface_grid, PredictionMode, Predictor,
};
use crate::anova::{fit_anova, forest_csv, AnovaConfig, AnovaScope};
use crate::data::{
    full_factorial, machining_factors, parse_dataset, parse_design, simulate_dataset, Coding, CovariateScale, Dataset,
    FactorSpec, MachineId, Response, Truth,
};
use crate::design::{build_design, N_TERMS};
use crate::error::{Error, ErrorKind, Result};
use crate::gibbs::{run_chain, McmcConfig, PosteriorDraws, Prior};
use crate::optim::{optimize, GaConfig, Metric, OptimizationResult, SearchSpace, ThresholdVector};
use crate::svg;

pub const OUTPUT_DIR_ENV: &str = "MACHOPT_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every random stream is derived from it.
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    /// Defaults to the five-level depth / feed / spindle factors.
    #[serde(default = "default_factors")]
    pub factors: Vec<FactorConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub anova: AnovaSettings,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub predictive: PredictiveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Input dataset; defaults to `<output_dir>/dataset.csv`.
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Truth file for `simulate`.
    pub truth: Option<PathBuf>,
    /// Design CSV (`machine,x1,x2,x3`) for `simulate`; full factorial if absent.
    pub design: Option<PathBuf>,
    /// Posterior draws; defaults to `<output_dir>/draws.csv`.
    pub draws: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: None,
            output_dir: PathBuf::from("out"),
            truth: None,
            design: None,
            draws: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub name: String,
    #[serde(default)]
    pub units: String,
    pub levels: Vec<f64>,
}

fn default_factors() -> Vec<FactorConfig> {
    machining_factors()
        .into_iter()
        .map(|f| FactorConfig {
            name: f.name.clone(),
            units: f.units.clone(),
            levels: f.levels().to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub scale: CovariateScale,
    #[serde(default)]
    pub prediction: PredictionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Prior mean of every coefficient.
    pub mean: f64,
    /// Prior variance of every coefficient.
    pub variance: f64,
    pub nu0: f64,
    /// Inverse-Wishart scale as `[s11, s12, s22]`.
    pub s0: [f64; 3],
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            mean: 0.0,
            variance: 100.0,
            nu0: 4.0,
            s0: [1.0, 0.0, 1.0],
        }
    }
}

impl PriorConfig {
    pub fn to_prior(&self) -> Result<Prior> {
        let mut prior = Prior::vague(self.variance);
        prior.b0.fill(self.mean);
        prior.nu0 = self.nu0;
        prior.s0 = Matrix2::new(self.s0[0], self.s0[1], self.s0[1], self.s0[2]);
        prior.validate()?;
        Ok(prior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcSettings {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            chains: d.chains,
        }
    }
}

impl McmcSettings {
    pub fn with_seed(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            chains: self.chains,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeSetting {
    #[default]
    Pooled,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnovaSettings {
    pub scope: ScopeSetting,
    /// Pooled scope only: include a fixed machine offset.
    pub machine_effect: bool,
    pub mcmc: McmcSettings,
}

impl Default for AnovaSettings {
    fn default() -> Self {
        AnovaSettings {
            scope: ScopeSetting::Pooled,
            machine_effect: true,
            mcmc: McmcSettings {
                iterations: 3000,
                burn_in: 1000,
                thin: 1,
                chains: 4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observed {
    pub roughness: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub machines: Vec<MachineId>,
    pub metric: Metric,
    /// Target responses per machine tag.
    pub thresholds: BTreeMap<MachineId, ThresholdVector>,
    /// Responses measured at the optimum, per machine tag; enables the
    /// prediction-error report.
    pub observed: BTreeMap<MachineId, Observed>,
    pub population: usize,
    pub generations: usize,
    pub elitism: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub uniform_mutation_rate: f64,
    pub boundary_mutation_rate: f64,
    pub gaussian_mutation_rate: f64,
    pub gaussian_scale: f64,
    pub refine_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let g = GaConfig::default();
        OptimizerConfig {
            machines: MachineId::ALL.to_vec(),
            metric: Metric::default(),
            thresholds: BTreeMap::new(),
            observed: BTreeMap::new(),
            population: g.population,
            generations: g.generations,
            elitism: g.elitism,
            tournament_size: g.tournament_size,
            crossover_rate: g.crossover_rate,
            uniform_mutation_rate: g.uniform_mutation_rate,
            boundary_mutation_rate: g.boundary_mutation_rate,
            gaussian_mutation_rate: g.gaussian_mutation_rate,
            gaussian_scale: g.gaussian_scale,
            refine_every: g.refine_every,
        }
    }
}

impl OptimizerConfig {
    pub fn ga(&self, seed: u64) -> GaConfig {
        GaConfig {
            population: self.population,
            generations: self.generations,
            elitism: self.elitism,
            tournament_size: self.tournament_size,
            crossover_rate: self.crossover_rate,
            uniform_mutation_rate: self.uniform_mutation_rate,
            boundary_mutation_rate: self.boundary_mutation_rate,
            gaussian_mutation_rate: self.gaussian_mutation_rate,
            gaussian_scale: self.gaussian_scale,
            refine_every: self.refine_every,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub machines: Vec<MachineId>,
    /// Factor pairs by 1-based index, e.g. `[[1, 2], [1, 3]]`.
    pub pairs: Vec<[usize; 2]>,
    pub resolution: usize,
    /// Value of each factor when it is held fixed, per machine. Missing
    /// entries are taken from `optimum_<M>.json`.
    pub fixed: BTreeMap<MachineId, [f64; 3]>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            machines: MachineId::ALL.to_vec(),
            pairs: vec![[1, 2], [1, 3], [2, 3]],
            resolution: 50,
            fixed: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveConfig {
    pub machines: Vec<MachineId>,
    pub draws: usize,
    pub bins: usize,
    /// Operating point per machine; missing entries come from `optimum_<M>.json`.
    pub points: BTreeMap<MachineId, [f64; 3]>,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        PredictiveConfig {
            machines: MachineId::ALL.to_vec(),
            draws: 20000,
            bins: 40,
            points: BTreeMap::new(),
        }
    }
}

/// Generating parameters read by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub roughness: Vec<f64>,
    pub power: Vec<f64>,
    /// `[s11, s12, s22]` of the log-response covariance.
    pub sigma: [f64; 3],
}

impl TruthFile {
    pub fn to_truth(&self) -> Result<Truth> {
        let arr = |v: &[f64], name: &str| -> Result<[f64; N_TERMS]> {
            v.try_into().map_err(|_| {
                Error::Config(format!("truth: {name} needs {N_TERMS} coefficients, got {}", v.len()))
            })
        };
        if self.roughness.iter().chain(&self.power).chain(&self.sigma).any(|v| !v.is_finite()) {
            return Err(Error::Config("truth: non-finite value".into()));
        }
        let s = self.sigma;
        Ok(Truth::new(
            arr(&self.roughness, "roughness")?,
            arr(&self.power, "power")?,
            Matrix2::new(s[0], s[1], s[1], s[2]),
        ))
    }
}

impl RunConfig {
    /// Parses `text`, applies the output-dir environment override, then the
    /// `key=value` overrides, and validates the result.
    pub fn load(text: &str, overrides: &[String], env_output_dir: Option<&str>) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(dir) = env_output_dir {
            set_key(&mut table, "paths.output_dir", toml::Value::String(dir.to_string()))?;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_key(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.factor_specs()?;
        self.prior.to_prior()?;
        for (m, t) in &self.optimizer.thresholds {
            ThresholdVector::new(t.power, t.roughness)
                .map_err(|e| Error::Config(format!("optimizer.thresholds.{m}: {e}")))?;
        }
        self.optimizer.ga(self.seed).validate()?;
        if self.surface.resolution < 2 {
            return Err(Error::Config("surface.resolution must be at least 2".into()));
        }
        for p in &self.surface.pairs {
            if !(1..=3).contains(&p[0]) || !(1..=3).contains(&p[1]) || p[0] == p[1] {
                return Err(Error::Config(format!("surface pair {p:?} must name two distinct factors in 1..=3")));
            }
        }
        Ok(())
    }

    pub fn factor_specs(&self) -> Result<[FactorSpec; 3]> {
        if self.factors.len() != 3 {
            return Err(Error::Config(format!("exactly 3 factors required, got {}", self.factors.len())));
        }
        let specs = self
            .factors
            .iter()
            .map(|f| FactorSpec::new(f.name.clone(), f.units.clone(), f.levels.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(specs.try_into().expect("three factors"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("key {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "machopt", version, about = "Bayesian SUR modelling and optimization of machining experiments")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "machopt.toml")]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set mcmc.iterations=2000`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Also write SVG renderings where available.
    #[arg(long, global = true)]
    pub svg: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a truth file.
    Simulate {
        /// Truth file; overrides `paths.truth`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit the SUR model: draws, convergence report, significance table.
    Fit {
        /// Also export the design matrix.
        #[arg(long)]
        export_design: bool,
    },
    /// Bayesian ANOVA of factor relevance for both responses.
    Anova,
    /// Optimal operating point per configured machine.
    Optimize,
    /// Response-surface grids.
    Surface,
    /// Per-machine boxplot statistics of the observed responses.
    Boxplot,
    /// Posterior predictive densities and HDIs.
    Predictive,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Anova => "anova",
            Command::Optimize => "optimize",
            Command::Surface => "surface",
            Command::Boxplot => "boxplot",
            Command::Predictive => "predictive",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::MissingArtifact => 4,
        ErrorKind::Io => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Execution context of one command.
pub struct Session {
    pub config: RunConfig,
    base: PathBuf,
    out_dir: PathBuf,
    svg: bool,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Session {
    /// `base` is the directory relative paths are resolved against.
    pub fn new(config: RunConfig, base: impl Into<PathBuf>, svg: bool) -> Result<Self> {
        let base = base.into();
        let out_dir = base.join(&config.paths.output_dir);
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        Ok(Session {
            config,
            base,
            out_dir,
            svg,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.out_dir
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn display(&self, path: &Path) -> String {
        path.strip_prefix(&self.base)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Reads a user-supplied input; a missing file is a configuration error.
    fn read_input(&mut self, path: &Path, what: &str) -> Result<String> {
        match fs::read_to_string(path) {
            Ok(text) => {
                self.record_input(path, text.as_bytes());
                Ok(text)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::Config(format!("{what} file {} not found", path.display())))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Reads an artifact produced by an earlier command.
    fn read_artifact(&mut self, path: &Path, hint: &str) -> Result<String> {
        match fs::read_to_string(path) {
            Ok(text) => {
                self.record_input(path, text.as_bytes());
                Ok(text)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: hint.to_string(),
            }),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: self.display(path),
            sha256: sha256_hex(bytes),
        });
    }

    fn write_output(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_svg(&mut self, name: &str, render: impl FnOnce() -> String) -> Result<()> {
        if self.svg {
            self.write_output(name, render().as_bytes())?;
        }
        Ok(())
    }

    fn dataset_path(&self) -> PathBuf {
        match &self.config.paths.dataset {
            Some(p) => self.resolve(p),
            None => self.out_dir.join("dataset.csv"),
        }
    }

    fn draws_path(&self) -> PathBuf {
        match &self.config.paths.draws {
            Some(p) => self.resolve(p),
            None => self.out_dir.join("draws.csv"),
        }
    }

    fn load_dataset(&mut self) -> Result<Dataset> {
        let factors = self.config.factor_specs()?;
        let path = self.dataset_path();
        let text = self.read_input(&path, "dataset")?;
        parse_dataset(&text, &factors)
    }

    fn load_draws(&mut self) -> Result<PosteriorDraws> {
        let path = self.draws_path();
        let text = self.read_artifact(&path, "run `machopt fit` first")?;
        PosteriorDraws::from_csv(&text)
    }

    fn predictor(&mut self) -> Result<(PosteriorDraws, Predictor)> {
        let draws = self.load_draws()?;
        let coding = Coding::new(&self.config.factor_specs()?, self.config.model.scale);
        let predictor = Predictor::new(&draws, coding, self.config.model.prediction)?;
        Ok((draws, predictor))
    }

    /// Operating point from `optimum_<M>.json`.
    fn load_optimum(&mut self, machine: MachineId) -> Result<[f64; 3]> {
        let path = self.out_dir.join(format!("optimum_{machine}.json"));
        let text = self.read_artifact(&path, "run `machopt optimize` first or configure the point")?;
        let r: OptimizationResult =
            serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        Ok(r.e_star)
    }

    /// Writes `manifest_<command>.json`.
    pub fn finish(mut self, command: &str) -> Result<Manifest> {
        let config = self.config.to_toml();
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            config_sha256: sha256_hex(config.as_bytes()),
            config,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&self.out_dir.join(format!("manifest_{command}.json")), json.as_bytes())?;
        Ok(manifest)
    }
}

/// Loads the config named by `cli` and runs the command.
pub fn run(cli: &Cli) -> Result<Manifest> {
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::Config(format!("config file {} not found", cli.config.display())))
        }
        Err(e) => return Err(Error::io(&cli.config, e)),
    };
    let env = std::env::var(OUTPUT_DIR_ENV).ok();
    let config = RunConfig::load(&text, &cli.overrides, env.as_deref())?;
    let base = cli
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let session = Session::new(config, base, cli.svg)?;
    run_command(session, &cli.command)
}

pub fn run_command(mut s: Session, command: &Command) -> Result<Manifest> {
    match command {
        Command::Simulate { truth } => cmd_simulate(&mut s, truth.as_deref())?,
        Command::Fit { export_design } => cmd_fit(&mut s, *export_design)?,
        Command::Anova => cmd_anova(&mut s)?,
        Command::Optimize => cmd_optimize(&mut s)?,
        Command::Surface => cmd_surface(&mut s)?,
        Command::Boxplot => cmd_boxplot(&mut s)?,
        Command::Predictive => cmd_predictive(&mut s)?,
    }
    s.finish(command.name())
}

pub fn cmd_simulate(s: &mut Session, truth: Option<&Path>) -> Result<()> {
    let truth_path = match truth {
        Some(p) => p.to_path_buf(),
        None => s
            .config
            .paths
            .truth
            .as_ref()
            .map(|p| s.resolve(p))
            .ok_or_else(|| Error::Config("simulate needs a truth file (paths.truth or --truth)".into()))?,
    };
    let text = s.read_input(&truth_path, "truth")?;
    let tf: TruthFile = toml::from_str(&text).map_err(|e| Error::Config(format!("truth file: {e}")))?;
    let truth = tf.to_truth()?;
    let factors = s.config.factor_specs()?;
    let design = match s.config.paths.design.clone() {
        Some(p) => {
            let path = s.resolve(&p);
            parse_design(&s.read_input(&path, "design")?)?
        }
        None => full_factorial(&factors),
    };
    let ds = simulate_dataset(&truth, &design, &factors, s.config.model.scale, s.config.seed)?;
    s.write_output("dataset.csv", ds.to_csv().as_bytes())
}

#[derive(Debug, Serialize)]
struct ConvergenceFile<'a> {
    max_rhat: f64,
    min_ess: f64,
    draws: usize,
    chains: usize,
    scale: CovariateScale,
    warnings: Vec<String>,
    parameters: &'a [crate::gibbs::ParameterDiagnostic],
}

pub fn cmd_fit(s: &mut Session, export_design: bool) -> Result<()> {
    let dataset = s.load_dataset()?;
    let design = build_design(&dataset, s.config.model.scale)?;
    if export_design {
        s.write_output("design.csv", design.to_csv().as_bytes())?;
    }
    let prior = s.config.prior.to_prior()?;
    let fit = run_chain(&design, &prior, &s.config.mcmc.with_seed(s.config.seed))?;
    let warnings = fit.convergence.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = ConvergenceFile {
        max_rhat: fit.convergence.max_rhat(),
        min_ess: fit.convergence.min_ess(),
        draws: fit.draws.len(),
        chains: fit.draws.n_chains(),
        scale: s.config.model.scale,
        warnings,
        parameters: &fit.convergence.parameters,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    s.write_output("draws.csv", fit.draws.to_csv().as_bytes())?;
    s.write_output("convergence.json", json.as_bytes())?;
    let table = significance_table(&fit.draws, 0.95)?;
    s.write_output("significance.csv", table.to_csv().as_bytes())
}

pub fn cmd_anova(s: &mut Session) -> Result<()> {
    let dataset = s.load_dataset()?;
    let settings = s.config.anova;
    let mcmc = settings.mcmc.with_seed(s.config.seed);
    let scopes: Vec<(AnovaScope, String)> = match settings.scope {
        ScopeSetting::Pooled => vec![(
            AnovaScope::Pooled {
                machine_effect: settings.machine_effect,
            },
            String::new(),
        )],
        ScopeSetting::Machine => MachineId::ALL
            .iter()
            .map(|m| (AnovaScope::Machine(*m), format!("_{m}")))
            .collect(),
    };
    for response in Response::ALL {
        for (scope, suffix) in &scopes {
            let config = AnovaConfig {
                response,
                scope: *scope,
                mcmc,
            };
            let sds = fit_anova(&dataset, &config)?.finite_pop_sds()?;
            let stem = format!("anova_{}{suffix}", response.name());
            s.write_output(&format!("{stem}.csv"), forest_csv(&sds).as_bytes())?;
            s.write_svg(&format!("{stem}.svg"), || svg::forest(&stem, &sds))?;
        }
    }
    Ok(())
}

pub fn cmd_optimize(s: &mut Session) -> Result<()> {
    let opt = s.config.optimizer.clone();
    for m in &opt.machines {
        if !opt.thresholds.contains_key(m) {
            return Err(Error::Config(format!(
                "thresholds required: set optimizer.thresholds.{m}.power and .roughness"
            )));
        }
    }
    let (_, predictor) = s.predictor()?;
    let space = SearchSpace::from_coding(predictor.coding())?;
    let ga = opt.ga(s.config.seed);
    let mut report = String::from("machine,x1,x2,x3,response,predicted,observed,relative_error,error_percent\n");
    let mut any_observed = false;
    for m in &opt.machines {
        let result = optimize(&predictor, *m, &opt.thresholds[m], opt.metric, &space, &ga)?;
        let json = serde_json::to_string_pretty(&result).expect("result serializes") + "\n";
        s.write_output(&format!("optimum_{m}.json"), json.as_bytes())?;
        if let Some(obs) = opt.observed.get(m) {
            any_observed = true;
            let [x1, x2, x3] = result.e_star;
            for (response, observed) in [(Response::Power, obs.power), (Response::Roughness, obs.roughness)] {
                let predicted = result.predicted.get(response);
                let err = relative_error(observed, predicted)?;
                report.push_str(&format!(
                    "{m},{x1},{x2},{x3},{},{predicted},{observed},{err},{}\n",
                    response.name(),
                    100.0 * err
                ));
            }
        }
    }
    if any_observed {
        s.write_output("table5.csv", report.as_bytes())?;
    }
    Ok(())
}

const FACTOR_TAGS: [&str; 3] = ["x1", "x2", "x3"];

pub fn cmd_surface(s: &mut Session) -> Result<()> {
    let cfg = s.config.surface.clone();
    let (_, predictor) = s.predictor()?;
    let factors = s.config.factor_specs()?;
    for m in &cfg.machines {
        let fixed = match cfg.fixed.get(m) {
            Some(p) => *p,
            None => s.load_optimum(*m)?,
        };
        for [a1, b1] in &cfg.pairs {
            let (a, b) = (a1 - 1, b1 - 1);
            let c = 3 - a - b;
            let grid = surface_grid((a, b), fixed[c], *m, &predictor, cfg.resolution)?;
            let mut csv = format!("{},{},roughness,power\n", factors[a].name, factors[b].name);
            for p in &grid {
                csv.push_str(&format!("{},{},{},{}\n", p.xa, p.xb, p.roughness, p.power));
            }
            let stem = format!("surface_{m}_{}_{}", FACTOR_TAGS[a], FACTOR_TAGS[b]);
            s.write_output(&format!("{stem}.csv"), csv.as_bytes())?;
            for r in Response::ALL {
                let title = format!("{} {stem}", r.name());
                s.write_svg(&format!("{stem}_{}.svg", r.name()), || {
                    svg::heatmap(&title, &grid, |p| match r {
                        Response::Roughness => p.roughness,
                        Response::Power => p.power,
                    })
                })?;
            }
        }
    }
    Ok(())
}

pub fn cmd_boxplot(s: &mut Session) -> Result<()> {
    let dataset = s.load_dataset()?;
    for r in Response::ALL {
        let boxes = boxplot_stats(&dataset, r)?;
        let mut csv = String::from("machine,n,min,q1,median,q3,max,outliers\n");
        for (m, b) in &boxes {
            let n = dataset.runs_for(*m).count();
            let outliers: Vec<String> = b.outliers.iter().map(|v| v.to_string()).collect();
            csv.push_str(&format!(
                "{m},{n},{},{},{},{},{},{}\n",
                b.min,
                b.q1,
                b.median,
                b.q3,
                b.max,
                outliers.join(";")
            ));
        }
        let stem = format!("boxplot_{}", r.name());
        s.write_output(&format!("{stem}.csv"), csv.as_bytes())?;
        s.write_svg(&format!("{stem}.svg"), || svg::boxplot(&stem, &boxes))?;
    }
    Ok(())
}

pub fn cmd_predictive(s: &mut Session) -> Result<()> {
    let cfg = s.config.predictive.clone();
    let (draws, predictor) = s.predictor()?;
    let coding = *predictor.coding();
    for m in &cfg.machines {
        let e = match cfg.points.get(m) {
            Some(p) => *p,
            None => s.load_optimum(*m)?,
        };
        let seed = s.config.seed ^ (*m as u64 + 1);
        let res = posterior_predictive(e, *m, &draws, coding, cfg.draws, cfg.bins, seed)?;
        let mut hist = String::from("response,bin_lower,bin_upper,count,density,in_hdi\n");
        let mut hdi = String::from("response,x1,x2,x3,point,hdi_lower,hdi_upper,mass\n");
        for r in Response::ALL {
            let h = &res.histograms[r.index()];
            let interval = res.hdi95[r.index()];
            for i in 0..h.counts.len() {
                let mid = 0.5 * (h.edges[i] + h.edges[i + 1]);
                hist.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.name(),
                    h.edges[i],
                    h.edges[i + 1],
                    h.counts[i],
                    h.density(i),
                    interval.contains(mid)
                ));
            }
            hdi.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.name(),
                e[0],
                e[1],
                e[2],
                res.point.get(r),
                interval.lower,
                interval.upper,
                interval.mass
            ));
            let stem = format!("predictive_{m}_{}", r.name());
            s.write_svg(&format!("{stem}.svg"), || svg::histogram(&stem, h, &interval))?;
        }
        s.write_output(&format!("predictive_{m}.csv"), hist.as_bytes())?;
        s.write_output(&format!("predictive_{m}_hdi.csv"), hdi.as_bytes())?;
    }
    Ok(())
}
