//! Shared generators for the integration tests.

#![allow(dead_code)]

use netloss::linalg::{
    controllability_matrix, max_generalized_eig, pole_place_si, rank, solve_stein, Mat, Vector,
};
use netloss::{
    check_stability, AttackStrategy, Dependence, LossChannel, MarkovLossModel, PlantModel, Rng,
    TriggerController,
};
use num_complex::Complex64;

/// A plant, a triggered controller whose stability certificate passes at
/// `rho`, and a channel whose losses stay well below `rho`.
pub struct CertifiedCase {
    pub plant: PlantModel,
    pub ctrl: TriggerController,
    pub phi: f64,
    pub rho: f64,
    pub channel: LossChannel,
    pub x0: Vector,
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

/// Draws single-input plants of order 1 to 3 until one can be certified.
pub fn certified_case(rng: &mut Rng) -> CertifiedCase {
    loop {
        if let Some(c) = try_case(rng) {
            return c;
        }
    }
}

fn try_case(rng: &mut Rng) -> Option<CertifiedCase> {
    let n = 1 + (rng.next_u64() % 3) as usize;
    let a = Mat::new(n, n, (0..n * n).map(|_| uniform(rng, -1.5, 1.5)).collect()).ok()?;
    let b = Vector::new((0..n).map(|_| uniform(rng, -1.0, 1.0)).collect()).ok()?;
    if rank(&controllability_matrix(&a, &b).ok()?, 1e-6) < n {
        return None;
    }
    let beta = uniform(rng, 0.05, 0.9);
    let radius = uniform(rng, 0.0, 0.9) * beta.sqrt();
    let mut targets = Vec::new();
    for _ in 0..n / 2 {
        let z = Complex64::from_polar(radius, uniform(rng, 0.0, std::f64::consts::PI));
        targets.push(z);
        targets.push(z.conj());
    }
    if n % 2 == 1 {
        targets.push(Complex64::new(radius * uniform(rng, -1.0, 1.0), 0.0));
    }
    let gain = pole_place_si(&a, &b, &targets).ok()?;
    let k = Mat::new(1, n, gain.as_slice().iter().map(|g| -g).collect()).ok()?;
    let plant = PlantModel::new(a.clone(), Mat::column(&b)).ok()?;
    let f = plant.closed_loop(&k).ok()?;
    let p = solve_stein(&f, beta, &Mat::identity(n)).ok()?;
    let p = p.scale(1.0 / p.frobenius_norm());
    let phi = max_generalized_eig(&p.congruence(&a).ok()?, &p).ok()?.max(1.0) * (1.0 + 1e-9);
    let critical = -beta.ln() / (phi.ln() - beta.ln());
    let rho = 0.8 * critical;
    let cert = check_stability(&plant, &k, &p, beta, phi, rho).ok()?;
    if !cert.pass || rho < 0.05 {
        return None;
    }
    let theta = 1 + rng.next_u64() % 8;
    let ctrl = TriggerController::new(k, p, beta, theta).ok()?;
    let p_loss = uniform(rng, 0.0, 0.5 * rho);
    let attack = match rng.next_u64() % 3 {
        0 => AttackStrategy::None,
        1 => AttackStrategy::BudgetGreedy { kappa: 0.0, tau: 4.0 / rho },
        _ => AttackStrategy::Bernoulli { p: 0.2 * rho },
    };
    let channel =
        LossChannel::new(MarkovLossModel::bernoulli(p_loss).ok()?, attack, Dependence::Independent).ok()?;
    let x0 = Vector::new((0..n).map(|_| uniform(rng, -5.0, 5.0)).collect()).ok()?;
    Some(CertifiedCase { plant, ctrl, phi, rho, channel, x0 })
}

/// Violations of the trigger invariants in a finished run: after every
/// successful exchange, `V` stays at or below `beta V(x(tau_i))` until the
/// next attempt; gaps never exceed `theta`.
pub fn invariant_violations(ctrl: &TriggerController, r: &netloss::SimResult) -> Vec<String> {
    let mut out = Vec::new();
    if r.trigger_times.first() != Some(&0) {
        out.push("first attempt not at t = 0".into());
    }
    for (i, gap) in r.trigger_gaps().iter().enumerate() {
        if *gap == 0 || *gap > ctrl.theta() {
            out.push(format!("gap {gap} after attempt {i} exceeds theta {}", ctrl.theta()));
        }
    }
    let end = r.v_trace.len() - 1;
    for (i, &tau) in r.trigger_times.iter().enumerate() {
        if r.loss_trace.bits()[i] {
            continue;
        }
        let tau = tau as usize;
        let next = r.trigger_times.get(i + 1).map_or(end, |&t| t as usize);
        let cap = ctrl.beta() * r.v_trace[tau];
        for t in tau + 1..=next {
            if r.v_trace[t] > cap * (1.0 + 1e-9) + f64::MIN_POSITIVE {
                out.push(format!("V({t}) = {:e} > beta V({tau}) = {cap:e}", r.v_trace[t]));
            }
        }
    }
    out
}
