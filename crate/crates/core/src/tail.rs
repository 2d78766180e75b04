//! Tail bounds on the number of failed exchange attempts.
//!
//! Closed-form Chernoff-type bounds for sums over a binary Markov chain, the
//! exponential bound for budget-constrained attacks, the admissible ranges of
//! the long-run loss ratio under the various ways random and malicious losses
//! combine, and an exhaustive enumeration oracle that computes the exact tail
//! probability for short horizons.

use serde::Serialize;
use thiserror::Error;

use crate::loss::{LossError, MarkovLossModel, MarkovLossProcess};
use crate::rng::{path_seed, Rng};

/// Longest horizon the enumeration oracle accepts.
pub const ORACLE_MAX_K: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("invalid tail-bound input: {0}")]
    Validation(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, TailError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(TailError::Validation(msg.into()))
}

/// Parameters `(rho, p_tilde, w_tilde)` of the Chernoff-type bound on
/// `P[sum_{i<k} xi(i) chi(i) > rho k]`, where `xi` is a Markov chain with
/// failure probabilities at most `p_tilde` and `chi` a process whose long-run
/// ratio is at most `w_tilde`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBoundSpec {
    rho: f64,
    p_tilde: f64,
    w_tilde: f64,
}

impl TailBoundSpec {
    pub fn new(rho: f64, p_tilde: f64, w_tilde: f64) -> Result<Self> {
        if !(p_tilde > 0.0 && p_tilde < 1.0) {
            return invalid(format!("p_tilde must lie in (0, 1), got {p_tilde}"));
        }
        if !(w_tilde > 0.0 && w_tilde <= 1.0) {
            return invalid(format!("w_tilde must lie in (0, 1], got {w_tilde}"));
        }
        if !(rho > p_tilde * w_tilde && rho < w_tilde) {
            return invalid(format!(
                "rho = {rho} outside the window ({}, {w_tilde})",
                p_tilde * w_tilde
            ));
        }
        Ok(Self {
            rho,
            p_tilde,
            w_tilde,
        })
    }

    /// The random-loss-only case (`w_tilde = 1`).
    pub fn random_only(rho: f64, p_tilde: f64) -> Result<Self> {
        Self::new(rho, p_tilde, 1.0)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn p_tilde(&self) -> f64 {
        self.p_tilde
    }

    pub fn w_tilde(&self) -> f64 {
        self.w_tilde
    }
}

/// `phi = (rho/w)(1 - p) / (p (1 - rho/w))`, always `> 1` inside the window.
pub fn chernoff_phi(spec: &TailBoundSpec) -> f64 {
    let r = spec.rho / spec.w_tilde;
    r * (1.0 - spec.p_tilde) / (spec.p_tilde * (1.0 - r))
}

/// `psi_k = sigma_k + phi^(1 - rho k) (((phi - 1) p + 1)^(w k) - 1) / ((phi - 1) p)`.
pub fn psi_k(spec: &TailBoundSpec, sigma_tilde_k: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return invalid("k must be positive");
    }
    if !(0.0..=1.0).contains(&sigma_tilde_k) {
        return invalid(format!("sigma_tilde_k must lie in [0, 1], got {sigma_tilde_k}"));
    }
    let phi = chernoff_phi(spec);
    let growth = (phi - 1.0) * spec.p_tilde + 1.0;
    let denom = (phi - 1.0) * spec.p_tilde;
    let kf = k as f64;
    // Evaluated in log space so that phi^(1 - rho k) cannot underflow before
    // the growth factor compensates. ln(g^e - 1) via expm1 for small e ln g.
    let x = spec.w_tilde * kf * growth.ln();
    let ln_num = if x < 700.0 { x.exp_m1().ln() } else { x + (-(-x).exp()).ln_1p() };
    let term = ((1.0 - spec.rho * kf) * phi.ln() + ln_num - denom.ln()).exp();
    Ok(sigma_tilde_k + term)
}

/// `sum_{k=1}^{k_max} psi_k` with `sigma_tilde_k = 0`.
pub fn psi_partial_sum(spec: &TailBoundSpec, k_max: u64) -> Result<f64> {
    (1..=k_max).try_fold(0.0, |acc, k| Ok(acc + psi_k(spec, 0.0, k)?))
}

/// Exact distribution of `L(k) = sum_{i<k} l_R(i)` by enumerating every one
/// of the `2^k` indicator sequences and multiplying its transition
/// probabilities. Entry `c` is `P[L(k) = c]`.
pub fn exact_count_distribution(model: &MarkovLossModel, k: usize) -> Result<Vec<f64>> {
    if k > ORACLE_MAX_K {
        return Err(TailError::Refused(format!(
            "enumeration limited to k <= {ORACLE_MAX_K}, got {k}"
        )));
    }
    // Transition probabilities do not depend on the path, so tabulate them:
    // fail[i][q] = P[attempt i fails | attempt i-1 had outcome q].
    let mut fail = Vec::with_capacity(k);
    for i in 0..k as u64 {
        if i == 0 {
            let p = model.fail_prob(None, 0)?;
            fail.push([p, p]);
        } else {
            fail.push([
                model.fail_prob(Some(false), i)?,
                model.fail_prob(Some(true), i)?,
            ]);
        }
    }
    let mut dist = vec![0.0; k + 1];
    enumerate(&fail, 0, 0, 0, 1.0, &mut dist);
    Ok(dist)
}

fn enumerate(fail: &[[f64; 2]], i: usize, prev: usize, count: usize, prob: f64, dist: &mut [f64]) {
    if i == fail.len() {
        dist[count] += prob;
        return;
    }
    let p = fail[i][prev];
    enumerate(fail, i + 1, 1, count + 1, prob * p, dist);
    enumerate(fail, i + 1, 0, count, prob * (1.0 - p), dist);
}

/// Exact `P[L(k) > rho k]` for `k <= 20`, strict inequality.
pub fn exact_tail_oracle(model: &MarkovLossModel, k: usize, rho: f64) -> Result<f64> {
    if k == 0 {
        return invalid("k must be positive");
    }
    let dist = exact_count_distribution(model, k)?;
    Ok(tail_of(&dist, k, rho))
}

/// `sum_{c > rho k} dist[c]`.
pub fn tail_of(dist: &[f64], k: usize, rho: f64) -> f64 {
    let threshold = rho * k as f64;
    dist.iter()
        .enumerate()
        .filter(|(c, _)| *c as f64 > threshold)
        .map(|(_, p)| p)
        .sum()
}

/// `e^(kappa - (rho_m - 1/tau) k)`, the bound on `P[L_M(k) > rho_m k]` for a
/// budget-constrained attacker.
pub fn jamming_tail_bound(kappa: f64, tau: f64, rho_m: f64, k: u64) -> Result<f64> {
    if !(kappa >= 0.0 && kappa.is_finite()) || !(tau > 1.0 && tau.is_finite()) {
        return invalid("need kappa >= 0 and tau > 1");
    }
    if !(rho_m > 1.0 / tau && rho_m < 1.0) {
        return invalid(format!("rho_m = {rho_m} must lie in (1/tau, 1) = ({}, 1)", 1.0 / tau));
    }
    Ok((kappa - (rho_m - 1.0 / tau) * k as f64).exp())
}

/// Which combination of loss sources a range was derived for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeSource {
    RandomOnly,
    IndependentCombined,
    DependentCombined,
    IndependentReverse,
    DependentReverse,
    ExclusiveReverse,
}

/// Admissible upper bounds `rho` on the long-run loss ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoRange {
    /// Every `rho` in `(lower, upper)` is admissible.
    Open {
        lower: f64,
        upper: f64,
        source: RangeSource,
    },
    /// Only the vacuous `rho = 1` is available (`P[L(k) > k] = 0`).
    Trivial { source: RangeSource },
}

impl RhoRange {
    fn from_lower(lower: f64, source: RangeSource) -> Self {
        if lower < 1.0 {
            RhoRange::Open {
                lower,
                upper: 1.0,
                source,
            }
        } else {
            RhoRange::Trivial { source }
        }
    }

    pub fn admits(&self, rho: f64) -> bool {
        match *self {
            RhoRange::Open { lower, upper, .. } => rho > lower && rho < upper,
            RhoRange::Trivial { .. } => rho == 1.0,
        }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            RhoRange::Open { lower, .. } => lower,
            RhoRange::Trivial { .. } => 1.0,
        }
    }
}

/// Admissible lower bounds `sigma` on the long-run loss ratio: `(0, upper)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaRange {
    pub lower: f64,
    pub upper: f64,
    pub source: RangeSource,
}

impl SigmaRange {
    fn new(upper: f64, source: RangeSource) -> Result<Self> {
        if !(upper > 0.0 && upper <= 1.0) {
            return invalid(format!("empty sigma range (0, {upper})"));
        }
        Ok(Self {
            lower: 0.0,
            upper,
            source,
        })
    }

    pub fn admits(&self, sigma: f64) -> bool {
        sigma > self.lower && sigma < self.upper
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        invalid(format!("{name} must lie in [0, 1], got {v}"))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        invalid(format!("{name} must lie in (0, 1), got {v}"))
    }
}

/// Random losses alone: `(p1, 1)`.
pub fn rho_range_random(p1: f64) -> Result<RhoRange> {
    unit("p1", p1)?;
    Ok(RhoRange::from_lower(p1, RangeSource::RandomOnly))
}

/// Attacks independent of random losses: `(p1 + p0 rho_m, 1)`.
pub fn rho_range_independent(p1: f64, p0: f64, rho_m: f64) -> Result<RhoRange> {
    unit("p1", p1)?;
    unit("p0", p0)?;
    unit("rho_m", rho_m)?;
    Ok(RhoRange::from_lower(p1 + p0 * rho_m, RangeSource::IndependentCombined))
}

/// Attacks that may depend on random losses: `(p1 + rho_m, 1)`.
pub fn rho_range_dependent(p1: f64, rho_m: f64) -> Result<RhoRange> {
    unit("p1", p1)?;
    unit("rho_m", rho_m)?;
    Ok(RhoRange::from_lower(p1 + rho_m, RangeSource::DependentCombined))
}

/// Independent attacks, from the attacker's side: `(0, 1 - p0 (1 - sigma_m))`.
pub fn sigma_range_independent(p0: f64, sigma_m: f64) -> Result<SigmaRange> {
    open_unit("p0", p0)?;
    open_unit("sigma_m", sigma_m)?;
    SigmaRange::new(1.0 - p0 * (1.0 - sigma_m), RangeSource::IndependentReverse)
}

/// Dependent attacks: `(0, max(1 - p0, sigma_m))`.
pub fn sigma_range_dependent(p0: f64, sigma_m: f64) -> Result<SigmaRange> {
    unit("p0", p0)?;
    unit("sigma_m", sigma_m)?;
    SigmaRange::new((1.0 - p0).max(sigma_m), RangeSource::DependentReverse)
}

/// Attacks that never coincide with random losses: `(0, 1 - p0 + sigma_m)`,
/// valid only while `1 - p0 + sigma_m <= 1`.
pub fn sigma_range_exclusive(p0: f64, sigma_m: f64) -> Result<SigmaRange> {
    unit("p0", p0)?;
    unit("sigma_m", sigma_m)?;
    let upper = 1.0 - p0 + sigma_m;
    if upper > 1.0 {
        return invalid(format!(
            "1 - p0 + sigma_m = {upper} > 1; use the dependent range instead"
        ));
    }
    SigmaRange::new(upper, RangeSource::ExclusiveReverse)
}

/// Monte Carlo estimate of `E[phi^(sum_j xi(i_j))]` next to its closed-form
/// bound `phi ((phi - 1) p + 1)^(s - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub paths: usize,
}

impl MomentCheck {
    /// `empirical <= bound + sigmas * std_error`.
    pub fn holds(&self, sigmas: f64) -> bool {
        self.empirical <= self.bound + sigmas * self.std_error
    }
}

/// Closed-form moment bound for `s` selected indices.
pub fn moment_bound(phi: f64, p_tilde: f64, s: usize) -> f64 {
    phi * ((phi - 1.0) * p_tilde + 1.0).powi(s as i32 - 1)
}

pub fn moment_bound_check(
    model: &MarkovLossModel,
    phi: f64,
    indices: &[u64],
    paths: usize,
    seed: u64,
) -> Result<MomentCheck> {
    if !(phi > 1.0 && phi.is_finite()) {
        return invalid(format!("phi must be > 1, got {phi}"));
    }
    if indices.is_empty() || indices.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("indices must be non-empty and strictly increasing");
    }
    if paths < 2 {
        return invalid("need at least two paths");
    }
    let last = *indices.last().expect("non-empty");
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for p in 0..paths {
        let mut rng = Rng::new(path_seed(seed, p as u64));
        let mut chain = MarkovLossProcess::new(model.clone());
        let mut hits = 0i32;
        let mut next = 0;
        for i in 0..=last {
            let bit = chain.next(&mut rng)?;
            if i == indices[next] {
                hits += bit as i32;
                next += 1;
            }
        }
        let v = phi.powi(hits);
        sum += v;
        sum_sq += v * v;
    }
    let n = paths as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(MomentCheck {
        empirical: mean,
        std_error: (var / n).sqrt(),
        bound: moment_bound(phi, model.p1_bound(), indices.len()),
        paths,
    })
}
