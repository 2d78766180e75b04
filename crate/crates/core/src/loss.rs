//! Packet-loss processes.
//!
//! A [`LossChannel`] combines a binary, possibly time-inhomogeneous Markov
//! chain of random losses with a malicious [`AttackStrategy`]. An exchange
//! attempt fails when either source fails. Channels are immutable
//! configuration; [`LossChannel::start`] creates the per-path state that
//! actually draws the indicators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_seed, Rng};

const RANDOM_STREAM: u64 = 0;
const ATTACK_STREAM: u64 = 1;
/// Largest denominator used when snapping budget parameters to rationals.
pub const MAX_BUDGET_DENOMINATOR: i128 = 1_000_000;
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("invalid loss model: {0}")]
    Validation(String),
    #[error("channel configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, LossError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    SinusoidSquared,
    Sinusoid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wave {
    #[default]
    Sin,
    Cos,
}

/// Probability of a failed attempt as a function of the attempt index:
/// `base`, `base + amplitude * w(f i)^2` or `base + amplitude * w(f i)` with
/// `w` either sine or cosine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct TransitionSchedule {
    kind: ScheduleKind,
    base: f64,
    amplitude: f64,
    frequency: f64,
    wave: Wave,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RawSchedule {
    #[serde(default)]
    kind: ScheduleKind,
    base: f64,
    #[serde(default)]
    amplitude: f64,
    #[serde(default)]
    frequency: f64,
    #[serde(default)]
    wave: Wave,
}

impl TryFrom<RawSchedule> for TransitionSchedule {
    type Error = LossError;

    fn try_from(r: RawSchedule) -> Result<Self> {
        TransitionSchedule::new(r.kind, r.base, r.amplitude, r.frequency, r.wave)
    }
}

impl From<TransitionSchedule> for RawSchedule {
    fn from(s: TransitionSchedule) -> Self {
        RawSchedule {
            kind: s.kind,
            base: s.base,
            amplitude: s.amplitude,
            frequency: s.frequency,
            wave: s.wave,
        }
    }
}

impl TransitionSchedule {
    pub fn new(
        kind: ScheduleKind,
        base: f64,
        amplitude: f64,
        frequency: f64,
        wave: Wave,
    ) -> Result<Self> {
        if ![base, amplitude, frequency].iter().all(|v| v.is_finite()) {
            return Err(LossError::Validation("schedule parameters must be finite".into()));
        }
        let s = Self {
            kind,
            base,
            amplitude,
            frequency,
            wave,
        };
        let (lo, hi) = s.range();
        if lo < 0.0 || hi > 1.0 {
            return Err(LossError::Validation(format!(
                "schedule ranges over [{lo}, {hi}], outside [0, 1]"
            )));
        }
        Ok(s)
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, p, 0.0, 0.0, Wave::Sin)
    }

    pub fn sinusoid_squared(base: f64, amplitude: f64, frequency: f64, wave: Wave) -> Result<Self> {
        Self::new(ScheduleKind::SinusoidSquared, base, amplitude, frequency, wave)
    }

    pub fn sinusoid(base: f64, amplitude: f64, frequency: f64, wave: Wave) -> Result<Self> {
        Self::new(ScheduleKind::Sinusoid, base, amplitude, frequency, wave)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn eval(&self, i: u64) -> f64 {
        let x = self.frequency * i as f64;
        let w = match self.wave {
            Wave::Sin => x.sin(),
            Wave::Cos => x.cos(),
        };
        match self.kind {
            ScheduleKind::Constant => self.base,
            ScheduleKind::SinusoidSquared => self.base + self.amplitude * w * w,
            ScheduleKind::Sinusoid => self.base + self.amplitude * w,
        }
    }

    /// Interval enclosing every value of the schedule.
    pub fn range(&self) -> (f64, f64) {
        match self.kind {
            ScheduleKind::Constant => (self.base, self.base),
            ScheduleKind::SinusoidSquared => (
                self.base + self.amplitude.min(0.0),
                self.base + self.amplitude.max(0.0),
            ),
            ScheduleKind::Sinusoid => (
                self.base - self.amplitude.abs(),
                self.base + self.amplitude.abs(),
            ),
        }
    }
}

/// Binary Markov chain of random losses: `init_fail` is the probability that
/// the first attempt fails; `from_ok(i)` and `from_fail(i)` give the
/// probability that attempt `i + 1` fails after attempt `i` succeeded or
/// failed. `p1_bound` bounds every failure probability from above and
/// `p0_bound` every success probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarkov", into = "RawMarkov")]
pub struct MarkovLossModel {
    init_fail: f64,
    from_ok: TransitionSchedule,
    from_fail: TransitionSchedule,
    p1_bound: f64,
    p0_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawMarkov {
    init: [f64; 2],
    from_ok: TransitionSchedule,
    from_fail: TransitionSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p1_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p0_bound: Option<f64>,
}

impl TryFrom<RawMarkov> for MarkovLossModel {
    type Error = LossError;

    fn try_from(r: RawMarkov) -> Result<Self> {
        MarkovLossModel::new(
            (r.init[0], r.init[1]),
            r.from_ok,
            r.from_fail,
            r.p1_bound,
            r.p0_bound,
        )
    }
}

impl From<MarkovLossModel> for RawMarkov {
    fn from(m: MarkovLossModel) -> Self {
        RawMarkov {
            init: [1.0 - m.init_fail, m.init_fail],
            from_ok: m.from_ok,
            from_fail: m.from_fail,
            p1_bound: Some(m.p1_bound),
            p0_bound: Some(m.p0_bound),
        }
    }
}

impl MarkovLossModel {
    /// `init` is `(P[first attempt succeeds], P[first attempt fails])` and is
    /// normalised. Omitted bounds are set to the tightest values implied by
    /// the schedules.
    pub fn new(
        init: (f64, f64),
        from_ok: TransitionSchedule,
        from_fail: TransitionSchedule,
        p1_bound: Option<f64>,
        p0_bound: Option<f64>,
    ) -> Result<Self> {
        let (w0, w1) = init;
        if !(w0 >= 0.0 && w1 >= 0.0 && w0 + w1 > 0.0) || !(w0 + w1).is_finite() {
            return Err(LossError::Validation(
                "initial distribution must be non-negative with positive mass".into(),
            ));
        }
        let init_fail = w1 / (w0 + w1);
        let (lo0, hi0) = from_ok.range();
        let (lo1, hi1) = from_fail.range();
        let tight_p1 = hi0.max(hi1);
        let tight_p0 = 1.0 - lo0.min(lo1);
        let p1_bound = p1_bound.unwrap_or(tight_p1);
        let p0_bound = p0_bound.unwrap_or(tight_p0);
        if !(0.0..=1.0).contains(&p1_bound) || !(0.0..=1.0).contains(&p0_bound) {
            return Err(LossError::Validation("probability bounds must lie in [0, 1]".into()));
        }
        if tight_p1 > p1_bound + BOUND_SLACK {
            return Err(LossError::Validation(format!(
                "failure probability reaches {tight_p1}, above the bound {p1_bound}"
            )));
        }
        if tight_p0 > p0_bound + BOUND_SLACK {
            return Err(LossError::Validation(format!(
                "success probability reaches {tight_p0}, above the bound {p0_bound}"
            )));
        }
        Ok(Self {
            init_fail,
            from_ok,
            from_fail,
            p1_bound,
            p0_bound,
        })
    }

    /// Time-homogeneous chain.
    pub fn homogeneous(init_fail: f64, p01: f64, p11: f64) -> Result<Self> {
        Self::new(
            (1.0 - init_fail, init_fail),
            TransitionSchedule::constant(p01)?,
            TransitionSchedule::constant(p11)?,
            None,
            None,
        )
    }

    /// Independent losses with probability `p` at every attempt.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::homogeneous(p, p, p)
    }

    pub fn never_fail() -> Self {
        Self::bernoulli(0.0).expect("zero is a valid probability")
    }

    pub fn init_fail(&self) -> f64 {
        self.init_fail
    }

    pub fn p1_bound(&self) -> f64 {
        self.p1_bound
    }

    pub fn p0_bound(&self) -> f64 {
        self.p0_bound
    }

    /// Probability that attempt `i` fails given the previous outcome
    /// (`None` only for `i == 0`).
    pub fn fail_prob(&self, prev: Option<bool>, i: u64) -> Result<f64> {
        let p = match (prev, i) {
            (None, 0) => self.init_fail,
            (Some(false), i) if i > 0 => self.from_ok.eval(i - 1),
            (Some(true), i) if i > 0 => self.from_fail.eval(i - 1),
            _ => {
                return Err(LossError::Usage(format!(
                    "attempt {i} needs {} previous outcome",
                    if i == 0 { "no" } else { "a" }
                )))
            }
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(LossError::Invariant(format!(
                "transition probability {p} outside [0, 1] at attempt {i}"
            )));
        }
        Ok(p)
    }
}

/// Draws the random-loss indicator of attempt `i`.
pub fn markov_next(
    model: &MarkovLossModel,
    prev: Option<bool>,
    i: u64,
    rng: &mut Rng,
) -> Result<bool> {
    let p = model.fail_prob(prev, i)?;
    Ok(rng.bernoulli(p))
}

/// Per-path state of a [`MarkovLossModel`].
#[derive(Clone, Debug)]
pub struct MarkovLossProcess {
    model: MarkovLossModel,
    prev: Option<bool>,
    next_index: u64,
}

impl MarkovLossProcess {
    pub fn new(model: MarkovLossModel) -> Self {
        Self {
            model,
            prev: None,
            next_index: 0,
        }
    }

    pub fn next(&mut self, rng: &mut Rng) -> Result<bool> {
        let bit = markov_next(&self.model, self.prev, self.next_index, rng)?;
        self.prev = Some(bit);
        self.next_index += 1;
        Ok(bit)
    }
}

/// Best rational approximation with bounded denominator, by continued
/// fractions.
pub fn snap_rational(x: f64, max_den: i128) -> (i128, i128) {
    let (mut h_prev, mut h) = (0i128, 1i128);
    let (mut k_prev, mut k) = (1i128, 0i128);
    let mut rem = x;
    let (mut best_h, mut best_k) = (x.round() as i128, 1i128);
    for _ in 0..64 {
        let a = rem.floor();
        let ai = a as i128;
        let h_next = ai * h + h_prev;
        let k_next = ai * k + k_prev;
        if k_next > max_den {
            break;
        }
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
        best_h = h;
        best_k = k;
        let frac = rem - a;
        if frac.abs() < 1e-12 * x.abs().max(1.0) {
            break;
        }
        rem = 1.0 / frac;
    }
    (best_h, best_k)
}

/// Attack budget `kappa + k / tau`, held as exact rationals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    kappa: (i128, i128),
    tau: (i128, i128),
}

impl Budget {
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(LossError::Validation(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(tau.is_finite() && tau > 1.0) {
            return Err(LossError::Validation(format!("tau must be > 1, got {tau}")));
        }
        Ok(Self {
            kappa: snap_rational(kappa, MAX_BUDGET_DENOMINATOR),
            tau: snap_rational(tau, MAX_BUDGET_DENOMINATOR),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.0 as f64 / self.kappa.1 as f64
    }

    pub fn tau(&self) -> f64 {
        self.tau.0 as f64 / self.tau.1 as f64
    }

    /// `count <= kappa + k / tau`.
    pub fn within(&self, k: u64, count: u64) -> bool {
        let (kn, kd) = self.kappa;
        let (tn, td) = self.tau;
        (count as i128) * kd * tn <= kn * tn + (k as i128) * td * kd
    }

    /// Greedy rule: attack at `i >= 1` iff one more attack keeps the first
    /// `i + 1` attempts within budget. Never attacks at `i = 0`.
    pub fn allows(&self, i: u64, history: u64) -> bool {
        i >= 1 && self.within(i + 1, history + 1)
    }
}

/// Malicious packet-loss strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttackStrategy {
    None,
    /// Attack whenever the budget still allows it.
    BudgetGreedy { kappa: f64, tau: f64 },
    /// Budget-greedy, but only on attempts without a random loss.
    SelectiveBudget { kappa: f64, tau: f64 },
    /// Selective, and only while `ln V(x) <= zeta`.
    StateThreshold { kappa: f64, tau: f64, zeta: f64 },
    /// Attack every `period`-th attempt, with the period drawn once per path.
    RandomPeriod { periods: Vec<u64>, probs: Vec<f64> },
    /// Independent attacks with probability `p`.
    Bernoulli { p: f64 },
}

impl AttackStrategy {
    pub fn budget(&self) -> Result<Option<Budget>> {
        match *self {
            AttackStrategy::BudgetGreedy { kappa, tau }
            | AttackStrategy::SelectiveBudget { kappa, tau }
            | AttackStrategy::StateThreshold { kappa, tau, .. } => Budget::new(kappa, tau).map(Some),
            _ => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget()?;
        match self {
            AttackStrategy::StateThreshold { zeta, .. } if !zeta.is_finite() => {
                Err(LossError::Validation("zeta must be finite".into()))
            }
            AttackStrategy::RandomPeriod { periods, probs } => {
                if periods.is_empty() || periods.len() != probs.len() {
                    return Err(LossError::Validation(
                        "periods and probs must be non-empty and of equal length".into(),
                    ));
                }
                if periods.contains(&0) {
                    return Err(LossError::Validation("periods must be positive".into()));
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p))
                    || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(LossError::Validation("period probabilities must sum to 1".into()));
                }
                Ok(())
            }
            AttackStrategy::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(LossError::Validation(format!("attack probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the strategy reads the random-loss indicator of the same attempt.
    pub fn needs_random_observation(&self) -> bool {
        matches!(
            self,
            AttackStrategy::SelectiveBudget { .. } | AttackStrategy::StateThreshold { .. }
        )
    }

    pub fn needs_state(&self) -> bool {
        matches!(self, AttackStrategy::StateThreshold { .. })
    }
}

/// What an attacker may see when deciding on attempt `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observables {
    pub random_loss: Option<bool>,
    pub ln_v: Option<f64>,
}

/// Decision of a deterministic strategy at attempt `i`, given `history`
/// attacks so far. Random strategies need an [`Attacker`].
pub fn attack_next(
    strategy: &AttackStrategy,
    i: u64,
    history: u64,
    obs: Observables,
) -> Result<bool> {
    let budget_ok = |kappa: f64, tau: f64| -> Result<bool> {
        Ok(Budget::new(kappa, tau)?.allows(i, history))
    };
    match *strategy {
        AttackStrategy::None => Ok(false),
        AttackStrategy::BudgetGreedy { kappa, tau } => budget_ok(kappa, tau),
        AttackStrategy::SelectiveBudget { kappa, tau } => {
            let r = obs.random_loss.ok_or_else(missing_random)?;
            Ok(!r && budget_ok(kappa, tau)?)
        }
        AttackStrategy::StateThreshold { kappa, tau, zeta } => {
            let r = obs.random_loss.ok_or_else(missing_random)?;
            let ln_v = obs.ln_v.ok_or_else(|| {
                LossError::Config("state-threshold attack needs ln V(x) at each attempt".into())
            })?;
            Ok(!r && ln_v <= zeta && budget_ok(kappa, tau)?)
        }
        AttackStrategy::RandomPeriod { .. } | AttackStrategy::Bernoulli { .. } => Err(
            LossError::Usage("randomised strategies must be driven through an Attacker".into()),
        ),
    }
}

fn missing_random() -> LossError {
    LossError::Config(
        "selective strategies observe the random loss and need attacker-observes-random dependence"
            .into(),
    )
}

/// Per-path attacker state.
#[derive(Clone, Debug)]
pub struct Attacker {
    strategy: AttackStrategy,
    budget: Option<Budget>,
    history: u64,
    next_index: u64,
    period: Option<u64>,
    rng: Rng,
}

impl Attacker {
    pub fn new(strategy: AttackStrategy, mut rng: Rng) -> Result<Self> {
        strategy.validate()?;
        let budget = strategy.budget()?;
        let period = match &strategy {
            AttackStrategy::RandomPeriod { periods, probs } => {
                Some(periods[rng.categorical(probs)])
            }
            _ => None,
        };
        Ok(Self {
            strategy,
            budget,
            history: 0,
            next_index: 0,
            period,
            rng,
        })
    }

    pub fn history(&self) -> u64 {
        self.history
    }

    pub fn period(&self) -> Option<u64> {
        self.period
    }

    pub fn decide(&mut self, i: u64, obs: Observables) -> Result<bool> {
        if i != self.next_index {
            return Err(LossError::Usage(format!(
                "attacker expected attempt {}, got {i}",
                self.next_index
            )));
        }
        let hit = match (&self.strategy, self.budget) {
            (AttackStrategy::None, _) => false,
            (AttackStrategy::Bernoulli { p }, _) => {
                let p = *p;
                self.rng.bernoulli(p)
            }
            (AttackStrategy::RandomPeriod { .. }, _) => {
                let period = self.period.expect("period drawn at construction");
                i > 0 && i.is_multiple_of(period)
            }
            (_, Some(budget)) => {
                let gate = match self.strategy {
                    AttackStrategy::SelectiveBudget { .. } => {
                        !obs.random_loss.ok_or_else(missing_random)?
                    }
                    AttackStrategy::StateThreshold { zeta, .. } => {
                        let r = obs.random_loss.ok_or_else(missing_random)?;
                        let ln_v = obs.ln_v.ok_or_else(|| {
                            LossError::Config(
                                "state-threshold attack needs ln V(x) at each attempt".into(),
                            )
                        })?;
                        !r && ln_v <= zeta
                    }
                    _ => true,
                };
                gate && budget.allows(i, self.history)
            }
            (_, None) => unreachable!("budget strategies always carry a budget"),
        };
        if hit {
            self.history += 1;
        }
        self.next_index += 1;
        if let Some(budget) = self.budget {
            if !budget.within(self.next_index, self.history) {
                return Err(LossError::Invariant(format!(
                    "{} attacks in the first {} attempts exceed the budget",
                    self.history, self.next_index
                )));
            }
        }
        Ok(hit)
    }
}

/// Whether the attacker may read the random-loss outcome of the same attempt.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    #[default]
    Independent,
    AttackerObservesRandom,
}

/// Random losses composed with an attack strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel", into = "RawChannel")]
pub struct LossChannel {
    random: MarkovLossModel,
    attack: AttackStrategy,
    dependence: Dependence,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawChannel {
    random: MarkovLossModel,
    #[serde(default = "no_attack")]
    attack: AttackStrategy,
    #[serde(default)]
    dependence: Dependence,
}

fn no_attack() -> AttackStrategy {
    AttackStrategy::None
}

impl TryFrom<RawChannel> for LossChannel {
    type Error = LossError;

    fn try_from(r: RawChannel) -> Result<Self> {
        LossChannel::new(r.random, r.attack, r.dependence)
    }
}

impl From<LossChannel> for RawChannel {
    fn from(c: LossChannel) -> Self {
        RawChannel {
            random: c.random,
            attack: c.attack,
            dependence: c.dependence,
        }
    }
}

/// Indicators of one attempt: combined, random and malicious.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub l: bool,
    pub l_r: bool,
    pub l_m: bool,
}

impl LossChannel {
    pub fn new(random: MarkovLossModel, attack: AttackStrategy, dependence: Dependence) -> Result<Self> {
        attack.validate()?;
        if attack.needs_random_observation() && dependence == Dependence::Independent {
            return Err(LossError::Config(
                "selective strategies require attacker-observes-random dependence".into(),
            ));
        }
        Ok(Self {
            random,
            attack,
            dependence,
        })
    }

    pub fn never_fail() -> Self {
        Self::new(MarkovLossModel::never_fail(), AttackStrategy::None, Dependence::Independent)
            .expect("valid")
    }

    pub fn random(&self) -> &MarkovLossModel {
        &self.random
    }

    pub fn attack(&self) -> &AttackStrategy {
        &self.attack
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    /// True when the indicator sequence does not depend on the plant state.
    pub fn is_state_independent(&self) -> bool {
        !self.attack.needs_state()
    }

    pub fn start(&self, path_seed: u64) -> Result<ChannelPath> {
        Ok(ChannelPath {
            markov: MarkovLossProcess::new(self.random.clone()),
            random_rng: Rng::new(stream_seed(path_seed, RANDOM_STREAM)),
            attacker: Attacker::new(
                self.attack.clone(),
                Rng::new(stream_seed(path_seed, ATTACK_STREAM)),
            )?,
            dependence: self.dependence,
            next_index: 0,
        })
    }

    /// Runs `attempts` attempts without a plant. Fails for state-dependent
    /// attackers.
    pub fn trace(&self, attempts: usize, path_seed: u64) -> Result<ChannelTrace> {
        if !self.is_state_independent() {
            return Err(LossError::Config(
                "a state-dependent attacker cannot be run without a plant".into(),
            ));
        }
        let mut path = self.start(path_seed)?;
        let mut out = ChannelTrace::default();
        for i in 0..attempts as u64 {
            out.push(path.step(i, None)?);
        }
        Ok(out)
    }
}

/// Per-path channel state.
#[derive(Clone, Debug)]
pub struct ChannelPath {
    markov: MarkovLossProcess,
    random_rng: Rng,
    attacker: Attacker,
    dependence: Dependence,
    next_index: u64,
}

impl ChannelPath {
    /// Consults the channel for attempt `i`; attempts must be consecutive
    /// starting from zero. `ln_v` is `ln V(x)` at the attempt instant.
    pub fn step(&mut self, i: u64, ln_v: Option<f64>) -> Result<StepOutcome> {
        if i != self.next_index {
            return Err(LossError::Usage(format!(
                "attempt {i} out of order, expected {}",
                self.next_index
            )));
        }
        let (l_r, l_m) = match self.dependence {
            Dependence::Independent => {
                let l_m = self.attacker.decide(
                    i,
                    Observables {
                        random_loss: None,
                        ln_v,
                    },
                )?;
                let l_r = self.markov.next(&mut self.random_rng)?;
                (l_r, l_m)
            }
            Dependence::AttackerObservesRandom => {
                let l_r = self.markov.next(&mut self.random_rng)?;
                let l_m = self.attacker.decide(
                    i,
                    Observables {
                        random_loss: Some(l_r),
                        ln_v,
                    },
                )?;
                (l_r, l_m)
            }
        };
        self.next_index += 1;
        Ok(StepOutcome {
            l: l_r || l_m,
            l_r,
            l_m,
        })
    }
}

/// Failure indicators and their running sums `cum[k] = sum_{i<k} bits[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LossTrace {
    bits: Vec<bool>,
    cum: Vec<u64>,
}

impl Default for LossTrace {
    fn default() -> Self {
        Self {
            bits: Vec::new(),
            cum: vec![0],
        }
    }
}

impl LossTrace {
    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut t = Self::default();
        for b in bits {
            t.push(b);
        }
        t
    }

    pub fn push(&mut self, bit: bool) {
        let last = *self.cum.last().expect("cum starts at zero");
        self.bits.push(bit);
        self.cum.push(last + bit as u64);
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// `cum[k]` for `k = 0..=len`.
    pub fn cum(&self) -> &[u64] {
        &self.cum
    }

    /// `L(k)`.
    pub fn count(&self, k: usize) -> u64 {
        self.cum[k]
    }

    pub fn total(&self) -> u64 {
        *self.cum.last().expect("cum starts at zero")
    }
}

/// `L(k) / k` for `k = 1..=len`.
pub fn empirical_ratio(trace: &LossTrace) -> Vec<f64> {
    trace.cum[1..]
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 / (k + 1) as f64)
        .collect()
}

/// Combined, random and malicious traces of one path.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelTrace {
    pub combined: LossTrace,
    pub random: LossTrace,
    pub attack: LossTrace,
}

impl ChannelTrace {
    pub fn push(&mut self, o: StepOutcome) {
        self.combined.push(o.l);
        self.random.push(o.l_r);
        self.attack.push(o.l_m);
    }
}
