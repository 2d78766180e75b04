//! Closed-loop simulation of a linear plant controlled over a lossy channel.
//!
//! At every exchange attempt the plant sends its state; if the attempt
//! succeeds the controller's input `K x` is applied and held, otherwise the
//! plant applies zero input. Attempts are triggered when the Lyapunov-like
//! function `V(x) = x^T P x` of the predicted next state would exceed
//! `beta` times its value at the last attempt, or when `theta` steps have
//! elapsed since that attempt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, max_generalized_eig, LinalgError, Mat, Vector};
use crate::loss::{ChannelTrace, LossChannel, LossError, LossTrace};

pub const DEFAULT_DIVERGE_THRESHOLD: f64 = 1e9;
pub const DEFAULT_CONVERGE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid control configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, ControlError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ControlError::Validation(msg.into()))
}

/// `x(t+1) = A x(t) + B u(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlant", into = "RawPlant")]
pub struct PlantModel {
    a: Mat,
    b: Mat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawPlant {
    a: Mat,
    b: Mat,
}

impl TryFrom<RawPlant> for PlantModel {
    type Error = ControlError;

    fn try_from(r: RawPlant) -> Result<Self> {
        PlantModel::new(r.a, r.b)
    }
}

impl From<PlantModel> for RawPlant {
    fn from(p: PlantModel) -> Self {
        RawPlant { a: p.a, b: p.b }
    }
}

impl PlantModel {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if !a.is_square() {
            return invalid(format!("A must be square, got {}x{}", a.rows(), a.cols()));
        }
        if b.rows() != a.rows() {
            return invalid(format!("B has {} rows, A has {}", b.rows(), a.rows()));
        }
        Ok(Self { a, b })
    }

    /// Scalar plant `x+ = a x + b u`.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(Mat::scalar(a)?, Mat::scalar(b)?)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    /// The input column of a single-input plant.
    pub fn input_column(&self) -> Option<Vector> {
        (self.m() == 1).then(|| self.b.col(0))
    }

    /// `A + B K`.
    pub fn closed_loop(&self, k: &Mat) -> Result<Mat> {
        Ok(self.a.add(&self.b.matmul(k)?)?)
    }
}

/// Feedback gain, Lyapunov matrix, level `beta` and attempt cap `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawController", into = "RawController")]
pub struct TriggerController {
    k: Mat,
    p: Mat,
    beta: f64,
    theta: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawController {
    k: Mat,
    p: Mat,
    beta: f64,
    theta: u64,
}

impl TryFrom<RawController> for TriggerController {
    type Error = ControlError;

    fn try_from(r: RawController) -> Result<Self> {
        TriggerController::new(r.k, r.p, r.beta, r.theta)
    }
}

impl From<TriggerController> for RawController {
    fn from(c: TriggerController) -> Self {
        RawController {
            k: c.k,
            p: c.p,
            beta: c.beta,
            theta: c.theta,
        }
    }
}

impl TriggerController {
    pub fn new(k: Mat, p: Mat, beta: f64, theta: u64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return invalid(format!("beta must lie in (0, 1), got {beta}"));
        }
        if theta == 0 {
            return invalid("theta must be at least 1");
        }
        if k.cols() != p.rows() {
            return invalid(format!("K has {} columns, P is {}x{}", k.cols(), p.rows(), p.cols()));
        }
        cholesky(&p).map_err(|e| {
            ControlError::Validation(format!("P must be symmetric positive definite: {e}"))
        })?;
        Ok(Self { k, p, beta, theta })
    }

    pub fn k(&self) -> &Mat {
        &self.k
    }

    pub fn p(&self) -> &Mat {
        &self.p
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> u64 {
        self.theta
    }

    pub fn with_theta(mut self, theta: u64) -> Result<Self> {
        if theta == 0 {
            return invalid("theta must be at least 1");
        }
        self.theta = theta;
        Ok(self)
    }

    /// `V(x) = x^T P x`.
    pub fn lyapunov(&self, x: &Vector) -> f64 {
        self.p.quad_form(x).unwrap_or(f64::INFINITY)
    }

    fn check_plant(&self, plant: &PlantModel) -> Result<()> {
        if self.k.rows() != plant.m() || self.k.cols() != plant.n() {
            return invalid(format!(
                "K is {}x{}, plant needs {}x{}",
                self.k.rows(),
                self.k.cols(),
                plant.m(),
                plant.n()
            ));
        }
        Ok(())
    }
}

/// Initial state, horizon, verdict thresholds on `||x||` and the path seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: Vector,
    pub horizon: usize,
    #[serde(default = "default_diverge")]
    pub diverge_threshold: f64,
    #[serde(default = "default_converge")]
    pub converge_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_diverge() -> f64 {
    DEFAULT_DIVERGE_THRESHOLD
}

fn default_converge() -> f64 {
    DEFAULT_CONVERGE_THRESHOLD
}

impl SimConfig {
    pub fn new(x0: Vector, horizon: usize, seed: u64) -> Self {
        Self {
            x0,
            horizon,
            diverge_threshold: DEFAULT_DIVERGE_THRESHOLD,
            converge_threshold: DEFAULT_CONVERGE_THRESHOLD,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return invalid("horizon must be positive");
        }
        if !(self.converge_threshold >= 0.0 && self.diverge_threshold > self.converge_threshold)
            || !self.diverge_threshold.is_finite()
        {
            return invalid("thresholds must satisfy 0 <= converge < diverge < inf");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `||x||` fell below the convergence threshold.
    Converged,
    /// `||x||` exceeded the divergence threshold (or overflowed).
    Diverged,
    /// Neither threshold was crossed within the horizon.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    /// `x(0), ..., x(T)`.
    pub states: Vec<Vector>,
    /// `u(0), ..., u(T-1)`.
    pub inputs: Vec<Vector>,
    /// `V(x(t))` for every state.
    pub v_trace: Vec<f64>,
    /// Attempt instants, starting at zero.
    pub trigger_times: Vec<u64>,
    /// Combined failure indicators, one per attempt.
    pub loss_trace: LossTrace,
    pub random_trace: LossTrace,
    pub attack_trace: LossTrace,
    /// `L(k) / k` per attempt.
    pub ratio_series: Vec<f64>,
    /// `((k - L(k)) ln beta + L(k) ln phi) / k` per attempt, with `phi` the
    /// smallest value for which `A^T P A <= phi P` (at least one).
    pub log_lyap_estimate: Vec<f64>,
    pub phi: f64,
    pub verdict: Verdict,
}

impl SimResult {
    pub fn ln_v(&self) -> Vec<f64> {
        self.v_trace.iter().map(|v| v.ln()).collect()
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.states.iter().map(Vector::norm).collect()
    }

    pub fn attempts(&self) -> usize {
        self.loss_trace.len()
    }

    /// `tau_{i+1} - tau_i`.
    pub fn trigger_gaps(&self) -> Vec<u64> {
        self.trigger_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("at least the initial state")
    }
}

/// Trigger rule: due when `steps_since_exchange >= theta` or the
/// predicted `V` strictly exceeds `beta * v_at_last_exchange`.
pub fn trigger_due(
    ctrl: &TriggerController,
    predicted_next: &Vector,
    v_at_last_exchange: f64,
    steps_since_exchange: u64,
) -> bool {
    steps_since_exchange >= ctrl.theta
        || ctrl.lyapunov(predicted_next) > ctrl.beta * v_at_last_exchange
}

/// `A x + B u`. Overflow is not an error here; the simulator turns a
/// non-finite state into a divergence verdict.
pub fn step_closed_loop(plant: &PlantModel, x: &Vector, u_held: &Vector) -> Result<Vector> {
    let ax = plant.a.mul_vec(x)?;
    let bu = plant.b.mul_vec(u_held)?;
    Ok(ax.add(&bu))
}

fn input_for(ctrl: &TriggerController, x: &Vector, failed: bool, m: usize) -> Result<Vector> {
    if failed {
        Ok(Vector::zeros(m))
    } else {
        Ok(Vector::from_raw(ctrl.k.mul_vec(x)?.as_slice().to_vec()))
    }
}

/// `((k - L) ln beta + L ln phi) / k` for every prefix of `trace`.
pub fn lyap_exponent_series(trace: &LossTrace, beta: f64, phi: f64) -> Vec<f64> {
    let (lb, lp) = (beta.ln(), phi.ln());
    trace.cum()[1..]
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let k = (i + 1) as f64;
            let l = l as f64;
            ((k - l) * lb + l * lp) / k
        })
        .collect()
}

/// Final value of [`lyap_exponent_series`].
pub fn lyap_exponent_estimate(result: &SimResult, beta: f64, phi: f64) -> Result<f64> {
    if result.loss_trace.is_empty() {
        return invalid("no exchange attempts in this run");
    }
    Ok(*lyap_exponent_series(&result.loss_trace, beta, phi)
        .last()
        .expect("non-empty"))
}

fn classify(x: &Vector, cfg: &SimConfig) -> Option<Verdict> {
    let norm = x.norm();
    if !norm.is_finite() || norm > cfg.diverge_threshold {
        Some(Verdict::Diverged)
    } else if norm < cfg.converge_threshold {
        Some(Verdict::Converged)
    } else {
        None
    }
}

/// Runs the event-triggered loop for `cfg.horizon` steps or until `||x||`
/// crosses a threshold. The channel is consulted once per attempt and sees
/// `ln V(x)` at the attempt instant.
pub fn simulate(
    plant: &PlantModel,
    ctrl: &TriggerController,
    channel: &LossChannel,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    ctrl.check_plant(plant)?;
    if cfg.x0.len() != plant.n() {
        return invalid(format!("x0 has length {}, plant order is {}", cfg.x0.len(), plant.n()));
    }
    let phi = max_generalized_eig(&ctrl.p.congruence(&plant.a)?, &ctrl.p)?.max(1.0);
    let m = plant.m();
    let mut path = channel.start(cfg.seed)?;
    let mut x = cfg.x0.clone();
    let mut states = vec![x.clone()];
    let mut v_trace = vec![ctrl.lyapunov(&x)];
    let mut inputs = Vec::new();
    let mut trigger_times = Vec::new();
    let mut traces = ChannelTrace::default();
    let mut verdict = classify(&x, cfg);
    let mut t: u64 = 0;
    let mut attempt: u64 = 0;
    'attempts: while verdict.is_none() {
        let v_last = ctrl.lyapunov(&x);
        let outcome = path.step(attempt, Some(v_last.ln()))?;
        traces.push(outcome);
        trigger_times.push(t);
        let u = input_for(ctrl, &x, outcome.l, m)?;
        let tau = t;
        attempt += 1;
        loop {
            x = step_closed_loop(plant, &x, &u)?;
            t += 1;
            inputs.push(u.clone());
            states.push(x.clone());
            v_trace.push(ctrl.lyapunov(&x));
            if let Some(v) = classify(&x, cfg) {
                verdict = Some(v);
                break 'attempts;
            }
            if t as usize >= cfg.horizon {
                verdict = Some(Verdict::Inconclusive);
                break 'attempts;
            }
            let predicted = step_closed_loop(plant, &x, &u)?;
            if trigger_due(ctrl, &predicted, v_last, t - tau) {
                break;
            }
        }
    }
    let ChannelTrace {
        combined,
        random,
        attack,
    } = traces;
    Ok(SimResult {
        states,
        inputs,
        v_trace,
        trigger_times,
        ratio_series: crate::loss::empirical_ratio(&combined),
        log_lyap_estimate: lyap_exponent_series(&combined, ctrl.beta, phi),
        loss_trace: combined,
        random_trace: random,
        attack_trace: attack,
        phi,
        verdict: verdict.expect("loop exits with a verdict"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{AttackStrategy, Dependence, MarkovLossModel};

    fn scalar_ctrl(k: f64, beta: f64, theta: u64) -> TriggerController {
        TriggerController::new(Mat::scalar(k).unwrap(), Mat::scalar(1.0).unwrap(), beta, theta)
            .unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn theta_one_always_triggers() {
        let c = scalar_ctrl(-1.75, 0.0625, 1);
        assert!(trigger_due(&c, &v(&[0.0]), 1.0, 1));
    }

    #[test]
    fn ties_do_not_trigger() {
        let c = scalar_ctrl(-1.75, 0.0625, 5);
        // V(0.25) = 0.0625 = beta * 1
        assert!(!trigger_due(&c, &v(&[0.25]), 1.0, 1));
        assert!(trigger_due(&c, &v(&[0.2500001]), 1.0, 1));
        assert!(trigger_due(&c, &v(&[0.25]), 1.0, 5));
    }

    #[test]
    fn held_input_prediction_by_hand() {
        let plant = PlantModel::scalar(2.0, 1.0).unwrap();
        let c = scalar_ctrl(-1.75, 0.0625, 10);
        let u = v(&[-1.75]);
        let x1 = step_closed_loop(&plant, &v(&[1.0]), &u).unwrap();
        assert_eq!(x1, v(&[0.25]));
        let predicted = step_closed_loop(&plant, &x1, &u).unwrap();
        assert_eq!(predicted, v(&[-1.25]));
        assert_eq!(c.lyapunov(&predicted), 1.5625);
        assert!(trigger_due(&c, &predicted, 1.0, 1));
    }

    #[test]
    fn closed_loop_steps() {
        let id = PlantModel::new(Mat::identity(2), Mat::new(2, 1, vec![1.0, 0.0]).unwrap()).unwrap();
        let x = v(&[0.3, -0.7]);
        assert_eq!(step_closed_loop(&id, &x, &v(&[0.0])).unwrap(), x);
        let plant = PlantModel::scalar(2.0, 1.0).unwrap();
        // Successful exchange at x: u = -1.75 x.
        let x = v(&[0.8]);
        let u = v(&[-1.75 * 0.8]);
        assert!((step_closed_loop(&plant, &x, &u).unwrap()[0] - 0.2).abs() < 1e-15);
        assert_eq!(step_closed_loop(&plant, &x, &v(&[0.0])).unwrap()[0], 1.6);
    }

    #[test]
    fn zero_initial_state_converges_immediately() {
        let plant = PlantModel::scalar(2.0, 1.0).unwrap();
        let cfg = SimConfig::new(v(&[0.0]), 100, 0);
        let r = simulate(&plant, &scalar_ctrl(-1.75, 0.0625, 1), &LossChannel::never_fail(), &cfg)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Converged);
        assert!(r.states.iter().all(|x| x.norm() == 0.0));
        assert!(lyap_exponent_estimate(&r, 0.0625, 4.0).is_err());
    }

    #[test]
    fn lyap_estimate_extremes() {
        let plant = PlantModel::scalar(2.0, 1.0).unwrap();
        let c = scalar_ctrl(-1.75, 0.0625, 1);
        let mut cfg = SimConfig::new(v(&[1.0]), 20, 0);
        cfg.converge_threshold = 0.0;
        let r = simulate(&plant, &c, &LossChannel::never_fail(), &cfg).unwrap();
        assert!((lyap_exponent_estimate(&r, 0.0625, 4.0).unwrap() - 0.0625f64.ln()).abs() < 1e-15);
        let always = LossChannel::new(
            MarkovLossModel::bernoulli(1.0).unwrap(),
            AttackStrategy::None,
            Dependence::Independent,
        )
        .unwrap();
        let r = simulate(&plant, &c, &always, &cfg).unwrap();
        assert!((lyap_exponent_estimate(&r, 0.0625, 4.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(r.phi, 4.0);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn periodic_attack_exponent() {
        let plant = PlantModel::scalar(2.0, 1.0).unwrap();
        let c = scalar_ctrl(-1.75, 0.0625, 1);
        let ch = LossChannel::new(
            MarkovLossModel::never_fail(),
            AttackStrategy::BudgetGreedy { kappa: 0.0, tau: 3.0 },
            Dependence::Independent,
        )
        .unwrap();
        let mut cfg = SimConfig::new(v(&[1.0]), 3000, 0);
        cfg.converge_threshold = 0.0;
        cfg.diverge_threshold = f64::MAX;
        let r = simulate(&plant, &c, &ch, &cfg).unwrap();
        assert_eq!(r.attempts(), 3000);
        let want = (2.0 / 3.0) * 0.0625f64.ln() + (1.0 / 3.0) * 4f64.ln();
        let got = lyap_exponent_estimate(&r, 0.0625, 4.0).unwrap();
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn dimension_errors() {
        let plant = PlantModel::scalar(2.0, 1.0).unwrap();
        let c = TriggerController::new(
            Mat::new(1, 2, vec![1.0, 0.0]).unwrap(),
            Mat::identity(2),
            0.5,
            1,
        )
        .unwrap();
        let cfg = SimConfig::new(v(&[1.0]), 10, 0);
        assert!(simulate(&plant, &c, &LossChannel::never_fail(), &cfg).is_err());
        assert!(PlantModel::new(Mat::identity(2), Mat::scalar(1.0).unwrap()).is_err());
        assert!(TriggerController::new(Mat::scalar(1.0).unwrap(), Mat::scalar(-1.0).unwrap(), 0.5, 1).is_err());
        assert!(TriggerController::new(Mat::scalar(1.0).unwrap(), Mat::scalar(1.0).unwrap(), 1.0, 1).is_err());
        assert!(TriggerController::new(Mat::scalar(1.0).unwrap(), Mat::scalar(1.0).unwrap(), 0.5, 0).is_err());
    }
}
