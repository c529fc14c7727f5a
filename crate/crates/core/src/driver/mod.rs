//! Run configuration, result files and task dispatch for the `gaugework` CLI.

mod optimize;
mod snapshot;
mod suites;

pub use optimize::{
    classify_vacuum, gradient, gradient_check, minimize, parameter_count, ActionPoint, Classification, GradientCheck,
    Minimized, Objective, Orbit, StopReason,
};
pub use snapshot::{LatticeSnapshot, MatrixModelSnapshot};

use crate::algebroid::MetricTriple;
use crate::error::{Error, Result};
use crate::gravity::MetricPreset;
use crate::latticeymh::LatticeSpec;
use crate::liealg::{su_basis, LieData};
use crate::report::{Check, Report};
use crate::spectral::{self, Cutoff, FiniteSpectralTriple, TripleJson};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Verify,
    MatrixModel,
    Lattice,
    Algebroid,
    Spectral,
    Gravity,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    #[default]
    MatrixModel,
    LatticeYmh,
    Algebroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    #[default]
    Analytic,
    Fd,
}

/// Starting point of a minimization before the seeded perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// `A = 0` / `b = 0`.
    Orbit1,
    /// `A_k = iE_k` / `b_k = iE_k`.
    Orbit2,
    /// Random anti-Hermitian fields of unit scale.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricChoice {
    Standard,
    #[default]
    YmhCalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Initial trial step of the line search.
    pub step: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm drops to this value.
    pub tol: f64,
    pub gradient: GradientMode,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { step: 1.0, max_iter: 5000, tol: 1e-6, gradient: GradientMode::Analytic, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeConfig {
    pub kind: ActionKind,
    /// Defaults to orbit-1 for the matrix model and orbit-2 otherwise.
    pub start: Option<Start>,
    pub perturbation: f64,
    /// Largest Gram distance accepted as lying on an orbit.
    pub classify_tol: f64,
    /// The `minimize.action` check passes at or below this value.
    pub target_action: f64,
    /// Include the final fields in the result file.
    pub fields: bool,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            kind: ActionKind::MatrixModel,
            start: None,
            perturbation: 0.1,
            classify_tol: 1e-2,
            target_action: 1e-6,
            fields: false,
        }
    }
}

impl MinimizeConfig {
    pub fn start(&self) -> Start {
        self.start.unwrap_or(match self.kind {
            ActionKind::MatrixModel => Start::Orbit1,
            _ => Start::Orbit2,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TripleChoice {
    TwoPoint { mass: f64 },
    /// `M₂(ℂ) ⊕ ℂ` with Yukawa entries given as `[re, im]`.
    M2PlusC { y: [[f64; 2]; 2] },
    Custom { triple: TripleJson },
}

impl TripleChoice {
    pub fn build(&self) -> Result<FiniteSpectralTriple> {
        match self {
            TripleChoice::TwoPoint { mass } => Ok(spectral::two_point(*mass)),
            TripleChoice::M2PlusC { y } => {
                Ok(spectral::m2_plus_c([Complex64::new(y[0][0], y[0][1]), Complex64::new(y[1][0], y[1][1])]))
            }
            TripleChoice::Custom { triple } => triple.to_triple(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub triple: TripleChoice,
    pub cutoff: Cutoff,
    pub lambda: f64,
    /// Random `(ω, u)` pairs per invariance check.
    pub samples: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { triple: TripleChoice::TwoPoint { mass: 1.0 }, cutoff: Cutoff::SmoothBump, lambda: 3.0, samples: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GravityConfig {
    pub preset: MetricPreset,
    /// Points per axis, one entry per refinement level.
    pub points: Vec<usize>,
    pub g_newton: f64,
}

impl Default for GravityConfig {
    fn default() -> Self {
        GravityConfig { preset: MetricPreset::Sphere { radius: 1.0 }, points: vec![65, 129, 257], g_newton: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgebroidConfig {
    pub metric: MetricChoice,
    /// Entry scale of random connections.
    pub scale: f64,
}

impl Default for AlgebroidConfig {
    fn default() -> Self {
        AlgebroidConfig { metric: MetricChoice::YmhCalibrated, scale: 0.3 }
    }
}

impl AlgebroidConfig {
    pub fn metric_triple(&self, lattice: &LatticeSpec, lie: &Arc<LieData>, mu: f64) -> Result<MetricTriple> {
        match self.metric {
            MetricChoice::Standard => Ok(MetricTriple::standard(lattice, lie)),
            MetricChoice::YmhCalibrated => MetricTriple::ymh_calibrated(lattice, lie, mu),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultConfig {
    /// Flip the sign of `C^3_{12}` (and its antisymmetric partner) before the Lie-algebra checks.
    pub corrupt_structure_constants: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    pub n: Vec<usize>,
    /// Lattice extents, e.g. `[[8, 8], [6, 6, 6]]`.
    pub grids: Vec<Vec<usize>>,
    pub spacing: f64,
    pub mu: f64,
    pub seed: u64,
    /// Random samples per statistical check.
    pub samples: usize,
    /// Per-check tolerance overrides keyed by check name.
    pub tolerances: BTreeMap<String, f64>,
    pub optimizer: OptimizerConfig,
    pub minimize: MinimizeConfig,
    pub spectral: SpectralConfig,
    pub gravity: GravityConfig,
    pub algebroid: AlgebroidConfig,
    pub fault: FaultConfig,
    pub out: Option<PathBuf>,
    /// Record wall-clock time in `timing_ms`.
    pub timing: bool,
    /// Thread count for inner loops; never echoed into the result file.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Verify,
            n: vec![2, 3],
            grids: vec![vec![8, 8], vec![6, 6, 6]],
            spacing: 0.125,
            mu: 1.0,
            seed: 0,
            samples: 20,
            tolerances: BTreeMap::new(),
            optimizer: OptimizerConfig::default(),
            minimize: MinimizeConfig::default(),
            spectral: SpectralConfig::default(),
            gravity: GravityConfig::default(),
            algebroid: AlgebroidConfig::default(),
            fault: FaultConfig::default(),
            out: None,
            timing: false,
            workers: None,
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

impl RunConfig {
    /// Parse a JSON config; unknown keys and type errors report the offending path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(config_error("n", "at least one matrix size is required"));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n == 0 || n > 6) {
            return Err(config_error("n", format!("matrix size {n} outside 1..=6")));
        }
        if self.grids.is_empty() {
            return Err(config_error("grids", "at least one lattice is required"));
        }
        for g in &self.grids {
            if g.is_empty() || g.len() > 4 {
                return Err(config_error("grids", format!("lattice {g:?} must have 1 to 4 axes")));
            }
            if g.iter().any(|&e| e < 3) {
                return Err(config_error("grids", format!("lattice {g:?} needs at least 3 sites per axis")));
            }
        }
        let positive = |v: f64, field: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_error(field, format!("{v} must be positive and finite")))
            }
        };
        positive(self.spacing, "spacing")?;
        positive(self.mu, "mu")?;
        positive(self.optimizer.step, "optimizer.step")?;
        positive(self.optimizer.fd_step, "optimizer.fd_step")?;
        positive(self.spectral.lambda, "spectral.lambda")?;
        positive(self.gravity.g_newton, "gravity.g_newton")?;
        positive(self.minimize.classify_tol, "minimize.classify_tol")?;
        if !(self.optimizer.tol >= 0.0) {
            return Err(config_error("optimizer.tol", "must be non-negative"));
        }
        if !(self.minimize.perturbation >= 0.0 && self.minimize.perturbation.is_finite()) {
            return Err(config_error("minimize.perturbation", "must be non-negative and finite"));
        }
        if self.samples == 0 {
            return Err(config_error("samples", "must be at least 1"));
        }
        if self.gravity.points.is_empty() || self.gravity.points.iter().any(|&p| p < 5) {
            return Err(config_error("gravity.points", "each resolution needs at least 5 points"));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers", "must be at least 1"));
        }
        for (k, v) in &self.tolerances {
            if !(v.is_finite()) {
                return Err(config_error(&format!("tolerances.{k}"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn lattice(&self, extents: &[usize]) -> Result<LatticeSpec> {
        LatticeSpec::new(extents.to_vec(), self.spacing)
    }
}

/// `su(n)` data, with the configured fault applied when requested.
pub fn lie_data(n: usize, fault: &FaultConfig) -> Result<Arc<LieData>> {
    let mut lie = su_basis(n)?;
    if fault.corrupt_structure_constants && lie.dim() >= 3 {
        let v = lie.c(2, 0, 1);
        lie.set_c(2, 0, 1, -v);
    }
    Ok(lie.shared())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: Task,
    pub config: RunConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    pub timing_ms: Option<f64>,
    pub schema_version: u32,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    /// Pretty JSON with a trailing newline; stable for a fixed config.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Process exit status for a failed run.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        _ => 3,
    }
}

/// Task output: a map of named results plus the checks.
pub(crate) struct TaskOutput {
    pub results: Map<String, Value>,
    pub report: Report,
}

impl TaskOutput {
    fn new() -> Self {
        TaskOutput { results: Map::new(), report: Report::new() }
    }

    /// Merge a per-size output, tagging its check names with `@label`.
    fn merge_labelled(&mut self, label: &str, mut other: TaskOutput) {
        for c in &mut other.report.checks {
            c.name = format!("{}@{label}", c.name);
        }
        self.merge(label, other);
    }

    fn merge(&mut self, section: &str, other: TaskOutput) {
        if !other.results.is_empty() {
            self.results.insert(section.into(), Value::Object(other.results));
        }
        self.report.extend(other.report);
    }
}

pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let out = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| config_error("workers", e.to_string()))?
            .install(|| dispatch(config))?,
        None => dispatch(config)?,
    };
    let mut checks = out.report.checks;
    for c in &mut checks {
        let base = c.name.split('@').next().unwrap_or_default();
        if let Some(&t) = config.tolerances.get(&c.name).or_else(|| config.tolerances.get(base)) {
            c.set_tolerance(t);
        }
    }
    Ok(RunResult {
        task: config.task,
        config: config.clone(),
        results: Value::Object(out.results),
        checks,
        timing_ms: config.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
        schema_version: SCHEMA_VERSION,
    })
}

fn dispatch(cfg: &RunConfig) -> Result<TaskOutput> {
    match cfg.task {
        Task::Verify => run_verify(cfg),
        Task::MatrixModel => per_n(cfg, |n| suites::matrix_model_suite(cfg, n)),
        Task::Lattice => per_lattice(cfg, |n, g| suites::lattice_suite(cfg, n, g)),
        Task::Algebroid => per_lattice(cfg, |n, g| suites::algebroid_suite(cfg, n, g)),
        Task::Spectral => suites::spectral_suite(cfg),
        Task::Gravity => suites::gravity_suite(cfg),
        Task::Minimize => optimize::run_minimize(cfg),
    }
}

/// Seeded stream for one suite and size; independent of evaluation order elsewhere.
pub(crate) fn rng_for(cfg: &RunConfig, tag: &str, label: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.bytes().chain([b'/']).chain(label.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(cfg.seed ^ h)
}

fn grid_label(g: &[usize]) -> String {
    g.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("x")
}

fn per_n(cfg: &RunConfig, f: impl Fn(usize) -> Result<TaskOutput>) -> Result<TaskOutput> {
    let mut out = TaskOutput::new();
    for &n in &cfg.n {
        out.merge_labelled(&format!("n{n}"), f(n)?);
    }
    Ok(out)
}

fn per_lattice(cfg: &RunConfig, f: impl Fn(usize, &[usize]) -> Result<TaskOutput>) -> Result<TaskOutput> {
    let mut out = TaskOutput::new();
    for &n in &cfg.n {
        for g in &cfg.grids {
            out.merge_labelled(&format!("n{n}_{}", grid_label(g)), f(n, g)?);
        }
    }
    Ok(out)
}

/// Every module's invariant suite at the configured sizes.
pub(crate) fn run_verify(cfg: &RunConfig) -> Result<TaskOutput> {
    let mut out = TaskOutput::new();
    out.merge("liealg", per_n(cfg, |n| suites::liealg_suite(cfg, n))?);
    out.merge("ncforms", per_n(cfg, |n| suites::ncforms_suite(cfg, n))?);
    out.merge("ncgauge", per_n(cfg, |n| suites::matrix_model_suite(cfg, n))?);
    out.merge("latticeymh", per_lattice(cfg, |n, g| suites::lattice_suite(cfg, n, g))?);
    out.merge("algebroid", per_lattice(cfg, |n, g| suites::algebroid_suite(cfg, n, g))?);
    out.merge("spectral", suites::spectral_suite(cfg)?);
    out.merge("gravity", suites::gravity_suite(cfg)?);
    Ok(out)
}
