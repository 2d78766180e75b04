//! WebAssembly bindings for the page in `www/`.
//!
//! Each exported function takes plain numbers and returns a JSON string;
//! failures come back as `{"error": "..."}` so the page never has to catch.

use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use netloss::control::lyap_exponent_estimate;
use netloss::loss::{ScheduleKind, TransitionSchedule, Wave};
use netloss::tail::{exact_tail_oracle, psi_k, TailBoundSpec};
use netloss::{
    check_instability, check_stability, simulate, AttackStrategy, Dependence, InstabilityCertificate,
    LossChannel, MarkovLossModel, Mat, PlantModel, SimConfig, StabilityCertificate,
    TriggerController, Vector,
};

/// Random losses of the scalar demo: failure probability `0.4 + 0.01 cos(0.1 i)`
/// after a success and `0.4 + 0.01 sin(0.1 i)` after a failure, first attempt
/// lost.
fn demo_chain() -> MarkovLossModel {
    let s = |wave| TransitionSchedule::new(ScheduleKind::Sinusoid, 0.4, 0.01, 0.1, wave);
    MarkovLossModel::new((0.0, 1.0), s(Wave::Cos).unwrap(), s(Wave::Sin).unwrap(), Some(0.41), Some(0.61))
        .expect("valid chain")
}

fn attack_channel(attack: &str, tau: f64, zeta: f64) -> Result<LossChannel, String> {
    let (strategy, dependence) = match attack {
        "none" => (AttackStrategy::None, Dependence::Independent),
        "greedy" => (AttackStrategy::BudgetGreedy { kappa: 0.0, tau }, Dependence::Independent),
        "selective" => (
            AttackStrategy::SelectiveBudget { kappa: 0.0, tau },
            Dependence::AttackerObservesRandom,
        ),
        "state" => (
            AttackStrategy::StateThreshold { kappa: 0.0, tau, zeta },
            Dependence::AttackerObservesRandom,
        ),
        other => return Err(format!("unknown attack '{other}'")),
    };
    LossChannel::new(demo_chain(), strategy, dependence).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct ScalarRun {
    /// `ln V(x(t))`; `None` once the state is exactly zero.
    pub ln_v: Vec<Option<f64>>,
    /// `L(k)/k`.
    pub ratio: Vec<f64>,
    pub verdict: String,
    /// `((k - L) ln beta + L ln phi) / k` at the last attempt, with
    /// `beta = (a + k)^2` and `phi = a^2`.
    pub exponent: Option<f64>,
}

/// Simulates `x+ = a x + u`, `u = k x` on success, with `P = 1` and an
/// exchange at every step.
#[allow(clippy::too_many_arguments)]
pub fn scalar_run(
    a: f64,
    k: f64,
    beta: f64,
    attack: &str,
    tau: f64,
    zeta: f64,
    seed: u64,
    steps: usize,
) -> Result<ScalarRun, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let plant = PlantModel::scalar(a, 1.0).map_err(|e| err(&e))?;
    let scalar = |v| Mat::scalar(v).map_err(|e| err(&e));
    let ctrl = TriggerController::new(scalar(k)?, scalar(1.0)?, beta, 1).map_err(|e| err(&e))?;
    let channel = attack_channel(attack, tau, zeta)?;
    let mut cfg = SimConfig::new(Vector::new(vec![1.0]).map_err(|e| err(&e))?, steps.max(1), seed);
    cfg.converge_threshold = 1e-150;
    cfg.diverge_threshold = 1e150;
    let r = simulate(&plant, &ctrl, &channel, &cfg).map_err(|e| err(&e))?;
    let (b_cl, phi) = ((a + k).powi(2), (a * a).max(1.0));
    Ok(ScalarRun {
        ln_v: r.ln_v().into_iter().map(|v| v.is_finite().then_some(v)).collect(),
        ratio: r.ratio_series.clone(),
        verdict: format!("{:?}", r.verdict).to_lowercase(),
        exponent: (b_cl > 0.0)
            .then(|| lyap_exponent_estimate(&r, b_cl, phi).ok())
            .flatten(),
    })
}

#[derive(Debug, Serialize)]
pub struct CriticalRatio {
    pub beta: f64,
    pub phi: f64,
    /// Ratio at which `(1 - r) ln beta + r ln phi` changes sign.
    pub critical: f64,
    pub stability: StabilityCertificate,
    pub instability: InstabilityCertificate,
}

/// Both certificates for the scalar plant at loss ratio `r`, with `P = 1`,
/// `beta = (a + k)^2` and `phi = a^2`.
pub fn critical_ratio(a: f64, k: f64, r: f64) -> Result<CriticalRatio, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let plant = PlantModel::scalar(a, 1.0).map_err(|e| err(&e))?;
    let (beta, phi) = ((a + k).powi(2), a * a);
    if !(beta > 0.0 && beta < 1.0) || phi < 1.0 {
        return Err(format!(
            "need 0 < (a + k)^2 < 1 and a^2 >= 1, got {beta:.4} and {phi:.4}"
        ));
    }
    let km = Mat::scalar(k).map_err(|e| err(&e))?;
    let p = Mat::identity(1);
    Ok(CriticalRatio {
        beta,
        phi,
        critical: -beta.ln() / (phi.ln() - beta.ln()),
        stability: check_stability(&plant, &km, &p, beta, phi, r).map_err(|e| err(&e))?,
        instability: check_instability(&plant, &km, &p, beta, phi, r, 1).map_err(|e| err(&e))?,
    })
}

#[derive(Debug, Serialize)]
pub struct TailRow {
    pub k: usize,
    pub exact: f64,
    pub psi: f64,
}

/// Exact `P[L(k) > rho k]` for Bernoulli(`p`) losses next to the bound
/// `psi_k`, for `k = 1..=k_max` (at most 20).
pub fn tail_table(p: f64, rho: f64, k_max: usize) -> Result<Vec<TailRow>, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let model = MarkovLossModel::bernoulli(p).map_err(|e| err(&e))?;
    let spec = TailBoundSpec::random_only(rho, p).map_err(|e| err(&e))?;
    (1..=k_max)
        .map(|k| {
            Ok(TailRow {
                k,
                exact: exact_tail_oracle(&model, k, rho).map_err(|e| err(&e))?,
                psi: psi_k(&spec, 0.0, k as u64).map_err(|e| err(&e))?,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen(js_name = scalarRun)]
#[allow(clippy::too_many_arguments)]
pub fn scalar_run_js(a: f64, k: f64, beta: f64, attack: &str, tau: f64, zeta: f64, seed: u32, steps: u32) -> String {
    to_json(scalar_run(a, k, beta, attack, tau, zeta, seed as u64, steps as usize))
}

#[wasm_bindgen(js_name = criticalRatio)]
pub fn critical_ratio_js(a: f64, k: f64, r: f64) -> String {
    to_json(critical_ratio(a, k, r))
}

#[wasm_bindgen(js_name = tailTable)]
pub fn tail_table_js(p: f64, rho: f64, k_max: u32) -> String {
    to_json(tail_table(p, rho, k_max as usize))
}
