//! Experiment files, bundled presets, Monte Carlo batches and result
//! emission.
//!
//! An experiment is a JSON document:
//!
//! ```json
//! {
//!   "name": "example2-tau3",
//!   "plant": { "a": [[2.0]], "b": [[1.0]] },
//!   "controller": { "type": "explicit", "k": [[-1.75]], "p": [[1.0]], "beta": 0.0625, "theta": 1 },
//!   "channel": { "random": { ... }, "attack": { "type": "budget_greedy", "kappa": 0, "tau": 3 } },
//!   "sim": { "x0": [1.0], "horizon": 500, "seed": 1 },
//!   "paths": 50,
//!   "outputs": ["ln_v", "loss_ratio", "certificates"],
//!   "certificates": { "stability": { "rho": 0.62, "phi": 4.0 } }
//! }
//! ```
//!
//! Controllers are `explicit` (K, P), `lmi` (Q, M with `P = Q^-1`,
//! `K = M Q^-1`) or `design` (searched for with [`design_gain`]).

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{
    check_instability, check_stability, default_beta_grid, design_gain, gain_from_qm,
    lmi_pair_feasible, lmi_pair_margins, CertifyError, DesignResult, InstabilityCertificate,
    StabilityCertificate, DEFAULT_DELTA,
};
use crate::control::{simulate, ControlError, PlantModel, SimConfig, TriggerController, Verdict};
use crate::linalg::{max_generalized_eig, LinalgError, Mat};
use crate::loss::{empirical_ratio, LossChannel, LossError, LossTrace};
use crate::rng::path_seed;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "NETLOSS_THREADS";

/// Name and JSON text of every bundled preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("example1", include_str!("../presets/example1.json")),
    ("example1-design", include_str!("../presets/example1-design.json")),
    ("example2-tau3", include_str!("../presets/example2-tau3.json")),
    ("example2-tau2", include_str!("../presets/example2-tau2.json")),
    ("example2-selective", include_str!("../presets/example2-selective.json")),
    ("example2-statedep", include_str!("../presets/example2-statedep.json")),
    ("example2-redesigned", include_str!("../presets/example2-redesigned.json")),
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error("cannot parse experiment: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// True for a design request that found no certified gain.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, ExperimentError::Certify(CertifyError::Infeasible { .. }))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, ExperimentError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExperimentError::Validation(msg.into()))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControllerSpec {
    Explicit {
        k: Mat,
        p: Mat,
        beta: f64,
        theta: u64,
    },
    Lmi {
        q: Mat,
        m: Mat,
        beta: f64,
        theta: u64,
    },
    Design {
        rho: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        theta: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_grid: Option<Vec<f64>>,
    },
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    #[serde(flatten)]
    pub config: SimConfig,
    /// Length of the loss-ratio series when it should extend past the
    /// simulated attempts. Only valid for state-independent channels, whose
    /// indicator sequence can be replayed from the path seed alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_attempts: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    StateNorm,
    LnV,
    LossRatio,
    TriggerGaps,
    Certificates,
}

impl Output {
    pub fn name(self) -> &'static str {
        match self {
            Output::StateNorm => "state_norm",
            Output::LnV => "ln_v",
            Output::LossRatio => "loss_ratio",
            Output::TriggerGaps => "trigger_gaps",
            Output::Certificates => "certificates",
        }
    }

    pub fn is_series(self) -> bool {
        self != Output::Certificates
    }
}

/// Stability check at loss-ratio bound `rho`. `beta` and `P` default to the
/// controller's; `phi` defaults to the smallest value the matrix condition
/// allows (at least one).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRequest {
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

/// Instability check at loss-ratio bound `sigma`. Defaults use the
/// controller's `P` and the largest `beta_hat`, `phi_hat` its matrix
/// conditions allow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityRequest {
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<Mat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_hat: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateRequests {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instability: Option<InstabilityRequest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub plant: PlantModel,
    pub controller: ControllerSpec,
    pub channel: LossChannel,
    pub sim: SimSpec,
    pub paths: usize,
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub certificates: CertificateRequests,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::from_json(text),
            None => invalid(format!(
                "unknown preset '{name}'; available: {}",
                preset_names().join(", ")
            )),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return invalid("paths must be at least 1");
        }
        if self.outputs.is_empty() {
            return invalid("at least one output must be requested");
        }
        self.sim.config.validate()?;
        if self.sim.config.x0.len() != self.plant.n() {
            return invalid(format!(
                "x0 has length {}, plant order is {}",
                self.sim.config.x0.len(),
                self.plant.n()
            ));
        }
        if self.sim.loss_attempts.is_some() && !self.channel.is_state_independent() {
            return invalid("loss_attempts needs a channel that does not observe the state");
        }
        let wants_certs = self.outputs.contains(&Output::Certificates);
        let has_certs = self.certificates.stability.is_some()
            || self.certificates.instability.is_some()
            || !matches!(self.controller, ControllerSpec::Explicit { .. });
        if wants_certs && !has_certs {
            return invalid("certificates requested but none configured");
        }
        Ok(())
    }
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// A controller ready to simulate, with the design that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedController {
    pub controller: TriggerController,
    pub design: Option<DesignResult>,
}

pub fn resolve_controller(plant: &PlantModel, spec: &ControllerSpec) -> Result<ResolvedController> {
    match spec {
        ControllerSpec::Explicit { k, p, beta, theta } => Ok(ResolvedController {
            controller: TriggerController::new(k.clone(), p.clone(), *beta, *theta)?,
            design: None,
        }),
        ControllerSpec::Lmi { q, m, beta, theta } => {
            let (k, p) = gain_from_qm(q, m)?;
            Ok(ResolvedController {
                controller: TriggerController::new(k, p, *beta, *theta)?,
                design: None,
            })
        }
        ControllerSpec::Design {
            rho,
            delta,
            theta,
            beta_grid,
        } => {
            let grid = beta_grid.clone().unwrap_or_else(|| default_beta_grid(*rho, *delta));
            let d = design_gain(plant, *rho, *delta, &grid)?;
            Ok(ResolvedController {
                controller: TriggerController::new(d.k.clone(), d.p.clone(), d.beta, *theta)?,
                design: Some(d),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateReport {
    Stability {
        rho: f64,
        beta: f64,
        phi: f64,
        certificate: StabilityCertificate,
    },
    Instability {
        sigma: f64,
        beta_hat: f64,
        phi_hat: f64,
        certificate: InstabilityCertificate,
    },
    Lmi {
        beta: f64,
        phi: f64,
        block_beta_margin: f64,
        block_phi_margin: f64,
        feasible: bool,
    },
}

impl CertificateReport {
    pub fn kind(&self) -> &'static str {
        match self {
            CertificateReport::Stability { .. } => "stability",
            CertificateReport::Instability { .. } => "instability",
            CertificateReport::Lmi { .. } => "lmi",
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            CertificateReport::Stability { certificate, .. } => certificate.pass,
            CertificateReport::Instability { certificate, .. } => certificate.pass,
            CertificateReport::Lmi { feasible, .. } => *feasible,
        }
    }

    /// Named scalar fields, in a fixed order.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            CertificateReport::Stability {
                rho,
                beta,
                phi,
                certificate: c,
            } => vec![
                ("rho", *rho),
                ("beta", *beta),
                ("phi", *phi),
                ("closed_loop_margin", c.closed_loop_margin),
                ("open_loop_margin", c.open_loop_margin),
                ("exponent_bound", c.exponent_bound),
                ("nu", c.nu),
                ("tol", c.tol),
                ("pass", flag(c.pass)),
            ],
            CertificateReport::Instability {
                sigma,
                beta_hat,
                phi_hat,
                certificate: c,
            } => vec![
                ("sigma", *sigma),
                ("beta_hat", *beta_hat),
                ("phi_hat", *phi_hat),
                ("closed_loop_margin", c.closed_loop_margin),
                ("open_loop_margin", c.open_loop_margin),
                ("exponent_bound", c.exponent_bound),
                ("tol", c.tol),
                ("theta_warning", flag(c.theta_warning)),
                ("pass", flag(c.pass)),
            ],
            CertificateReport::Lmi {
                beta,
                phi,
                block_beta_margin,
                block_phi_margin,
                feasible,
            } => vec![
                ("beta", *beta),
                ("phi", *phi),
                ("block_beta_margin", *block_beta_margin),
                ("block_phi_margin", *block_phi_margin),
                ("pass", flag(*feasible)),
            ],
        }
    }
}

/// Smallest `phi >= 1` with `A^T P A <= phi P`.
fn minimal_phi(plant: &PlantModel, p: &Mat) -> Result<f64> {
    Ok(max_generalized_eig(&p.congruence(plant.a())?, p)?.max(1.0))
}

/// Largest `c` with `S >= c P`.
fn min_generalized_eig(s: &Mat, p: &Mat) -> Result<f64> {
    Ok(-max_generalized_eig(&s.scale(-1.0), p)?)
}

/// Evaluates every configured certificate for `spec` with the resolved
/// controller.
pub fn certificates_for(spec: &ExperimentSpec, resolved: &ResolvedController) -> Result<Vec<CertificateReport>> {
    let plant = &spec.plant;
    let ctrl = &resolved.controller;
    let mut out = Vec::new();
    if let ControllerSpec::Lmi { q, m, beta, .. } = &spec.controller {
        let phi = match &spec.certificates.stability {
            Some(StabilityRequest { phi: Some(phi), .. }) => *phi,
            _ => minimal_phi(plant, ctrl.p())?,
        };
        let (mb, mp) = lmi_pair_margins(q, m, plant, *beta, phi)?;
        out.push(CertificateReport::Lmi {
            beta: *beta,
            phi,
            block_beta_margin: mb,
            block_phi_margin: mp,
            feasible: lmi_pair_feasible(q, m, plant, *beta, phi, 1e-9 * q.frobenius_norm())?,
        });
    }
    if let Some(d) = &resolved.design {
        let ControllerSpec::Design { rho, .. } = spec.controller else {
            unreachable!("design result only comes from a design request")
        };
        out.push(CertificateReport::Stability {
            rho,
            beta: d.beta,
            phi: d.phi,
            certificate: d.certificate.clone(),
        });
    }
    if let Some(req) = &spec.certificates.stability {
        let phi = match req.phi {
            Some(phi) => phi,
            None => minimal_phi(plant, ctrl.p())?,
        };
        let certificate = check_stability(plant, ctrl.k(), ctrl.p(), ctrl.beta(), phi, req.rho)?;
        out.push(CertificateReport::Stability {
            rho: req.rho,
            beta: ctrl.beta(),
            phi,
            certificate,
        });
    }
    if let Some(req) = &spec.certificates.instability {
        let p_hat = req.p_hat.clone().unwrap_or_else(|| ctrl.p().clone());
        let f = plant.closed_loop(ctrl.k())?;
        let beta_hat = match req.beta_hat {
            Some(b) => b,
            None => min_generalized_eig(&p_hat.congruence(&f)?, &p_hat)?,
        };
        let phi_hat = match req.phi_hat {
            Some(p) => p,
            None => min_generalized_eig(&p_hat.congruence(plant.a())?, &p_hat)?,
        };
        let certificate = check_instability(
            plant,
            ctrl.k(),
            &p_hat,
            beta_hat,
            phi_hat,
            req.sigma,
            ctrl.theta(),
        )?;
        out.push(CertificateReport::Instability {
            sigma: req.sigma,
            beta_hat,
            phi_hat,
            certificate,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: usize,
    pub seed: u64,
    pub verdict: Verdict,
    /// Steps simulated before the run stopped.
    pub steps: usize,
    pub attempts: usize,
    pub final_norm: f64,
    pub final_ln_v: f64,
    /// `L(k)/k` at the last entry of the loss-ratio series.
    pub final_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub min: Vec<f64>,
    pub median: Vec<f64>,
    pub max: Vec<f64>,
}

/// One column per path; columns may have different lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub output: Output,
    pub columns: Vec<Vec<f64>>,
    pub aggregate: Aggregate,
}

impl SeriesTable {
    fn new(output: Output, columns: Vec<Vec<f64>>) -> Self {
        let aggregate = aggregate(&columns);
        Self {
            output,
            columns,
            aggregate,
        }
    }

    pub fn rows(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Entry `t` of every column that reaches it.
    pub fn row(&self, t: usize) -> Vec<Option<f64>> {
        self.columns.iter().map(|c| c.get(t).copied()).collect()
    }
}

/// Min, median (mean of the middle pair for even counts) and max over the
/// columns present at each index. NaN entries are skipped.
pub fn aggregate(columns: &[Vec<f64>]) -> Aggregate {
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Aggregate::default();
    for t in 0..rows {
        let mut vals: Vec<f64> = columns
            .iter()
            .filter_map(|c| c.get(t).copied())
            .filter(|v| !v.is_nan())
            .collect();
        if vals.is_empty() {
            out.min.push(f64::NAN);
            out.median.push(f64::NAN);
            out.max.push(f64::NAN);
            continue;
        }
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        let median = if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        };
        out.min.push(vals[0]);
        out.median.push(median);
        out.max.push(vals[n - 1]);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub name: String,
    pub seed: u64,
    pub summaries: Vec<PathSummary>,
    pub series: Vec<SeriesTable>,
    pub certificates: Vec<CertificateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignResult>,
}

impl BatchResult {
    pub fn series(&self, output: Output) -> Option<&SeriesTable> {
        self.series.iter().find(|s| s.output == output)
    }

    pub fn verdict_count(&self, verdict: Verdict) -> usize {
        self.summaries.iter().filter(|s| s.verdict == verdict).count()
    }
}

struct PathRun {
    summary: PathSummary,
    series: Vec<Vec<f64>>,
}

fn run_path(
    spec: &ExperimentSpec,
    ctrl: &TriggerController,
    wanted: &[Output],
    path: usize,
) -> Result<PathRun> {
    let seed = path_seed(spec.sim.config.seed, path as u64);
    let mut cfg = spec.sim.config.clone();
    cfg.seed = seed;
    let r = simulate(&spec.plant, ctrl, &spec.channel, &cfg)?;
    let ratios = match spec.sim.loss_attempts {
        Some(n) if n > r.attempts() => {
            let trace: LossTrace = spec.channel.trace(n, seed)?.combined;
            debug_assert_eq!(&trace.bits()[..r.attempts()], r.loss_trace.bits());
            empirical_ratio(&trace)
        }
        _ => r.ratio_series.clone(),
    };
    let series = wanted
        .iter()
        .map(|o| match o {
            Output::StateNorm => r.state_norms(),
            Output::LnV => r.ln_v(),
            Output::LossRatio => ratios.clone(),
            Output::TriggerGaps => r.trigger_gaps().into_iter().map(|g| g as f64).collect(),
            Output::Certificates => unreachable!("not a series"),
        })
        .collect();
    Ok(PathRun {
        summary: PathSummary {
            path,
            seed,
            verdict: r.verdict,
            steps: r.states.len() - 1,
            attempts: r.attempts(),
            final_norm: r.final_state().norm(),
            final_ln_v: r.v_trace.last().copied().unwrap_or(f64::NAN).ln(),
            final_ratio: ratios.last().copied(),
        },
        series,
    })
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// `f(0), ..., f(n-1)` in index order, fanned out over the worker pool when
/// the `parallel` feature is enabled.
pub fn map_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..n).into_par_iter().map(&f).collect();
        match thread_cap().and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Resolves the controller, evaluates certificates once and simulates every
/// path. Deterministic in the spec; path `p` uses seed
/// `path_seed(sim.seed, p)`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<BatchResult> {
    spec.validate()?;
    let resolved = resolve_controller(&spec.plant, &spec.controller)?;
    let certificates = if spec.outputs.contains(&Output::Certificates) {
        certificates_for(spec, &resolved)?
    } else {
        Vec::new()
    };
    let mut wanted: Vec<Output> = Vec::new();
    for o in spec.outputs.iter().copied().filter(|o| o.is_series()) {
        if !wanted.contains(&o) {
            wanted.push(o);
        }
    }
    let ctrl = &resolved.controller;
    let runs = map_paths(spec.paths, |p| run_path(spec, ctrl, &wanted, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(spec.paths); wanted.len()];
    let mut summaries = Vec::with_capacity(spec.paths);
    for run in runs {
        for (dst, col) in columns.iter_mut().zip(run.series) {
            dst.push(col);
        }
        summaries.push(run.summary);
    }
    Ok(BatchResult {
        name: spec.name.clone(),
        seed: spec.sim.config.seed,
        summaries,
        series: wanted
            .into_iter()
            .zip(columns)
            .map(|(o, c)| SeriesTable::new(o, c))
            .collect(),
        certificates,
        design: resolved.design,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => invalid(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Float text with 17 significant digits, which round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// serde_json formatter printing every float with 17 significant digits.
/// Non-finite values become `null` before reaching it.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
}

/// JSON text of `value` with exact float formatting.
pub fn to_exact_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn series_csv(table: &SeriesTable) -> String {
    let mut s = String::from("t");
    for p in 0..table.columns.len() {
        s.push_str(&format!(",path_{p}"));
    }
    s.push('\n');
    for t in 0..table.rows() {
        s.push_str(&t.to_string());
        for v in table.row(t) {
            s.push(',');
            if let Some(v) = v {
                s.push_str(&fmt_f64(v));
            }
        }
        s.push('\n');
    }
    s
}

fn aggregate_csv(a: &Aggregate) -> String {
    let mut s = String::from("t,min,median,max\n");
    for t in 0..a.min.len() {
        s.push_str(&format!(
            "{t},{},{},{}\n",
            fmt_f64(a.min[t]),
            fmt_f64(a.median[t]),
            fmt_f64(a.max[t])
        ));
    }
    s
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Converged => "converged",
        Verdict::Diverged => "diverged",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn summary_csv(rows: &[PathSummary]) -> String {
    let mut s = String::from("path,seed,verdict,steps,attempts,final_norm,final_ln_v,final_ratio\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.path,
            r.seed,
            verdict_name(r.verdict),
            r.steps,
            r.attempts,
            fmt_f64(r.final_norm),
            fmt_f64(r.final_ln_v),
            r.final_ratio.map(fmt_f64).unwrap_or_default()
        ));
    }
    s
}

fn certificates_csv(reports: &[CertificateReport]) -> String {
    let mut s = String::from("certificate,field,value\n");
    for r in reports {
        for (field, value) in r.fields() {
            s.push_str(&format!("{},{field},{}\n", r.kind(), fmt_f64(value)));
        }
    }
    s
}

/// Writes `result` into the directory `dest` (created if missing) and
/// returns the files written.
///
/// CSV: `<series>.csv` with header `t,path_0,...`, `<series>_aggregate.csv`,
/// `summary.csv` and, when present, `certificates.csv`. Missing entries of
/// ragged series are empty cells. JSON: a single `result.json` with the same
/// content, missing entries absent and non-finite values as `null`.
pub fn emit(result: &BatchResult, format: Format, dest: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dest).map_err(io_err(dest))?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<()> {
        let path = dest.join(name);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };
    match format {
        Format::Csv => {
            for table in &result.series {
                put(format!("{}.csv", table.output.name()), series_csv(table))?;
                put(
                    format!("{}_aggregate.csv", table.output.name()),
                    aggregate_csv(&table.aggregate),
                )?;
            }
            put("summary.csv".into(), summary_csv(&result.summaries))?;
            if !result.certificates.is_empty() {
                put("certificates.csv".into(), certificates_csv(&result.certificates))?;
            }
            if let Some(d) = &result.design {
                put("design.json".into(), to_exact_json(d)?)?;
            }
        }
        Format::Json => put("result.json".into(), to_exact_json(result)?)?,
    }
    Ok(written)
}
