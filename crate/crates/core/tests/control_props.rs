mod common;

use common::{certified_case, invariant_violations};
use netloss::control::lyap_exponent_series;
use netloss::loss::LossTrace;
use netloss::{
    simulate, AttackStrategy, Dependence, LossChannel, Mat, MarkovLossModel, PlantModel, Rng,
    SimConfig, TriggerController, Vector, Verdict,
};

fn scalar_ctrl(k: f64, beta: f64, theta: u64) -> TriggerController {
    TriggerController::new(Mat::scalar(k).unwrap(), Mat::scalar(1.0).unwrap(), beta, theta).unwrap()
}

#[test]
fn trigger_invariants_on_random_certified_loops() {
    let mut rng = Rng::new(2024);
    for case in 0..200 {
        let c = certified_case(&mut rng);
        let mut cfg = SimConfig::new(c.x0.clone(), 300, case);
        cfg.converge_threshold = 1e-200;
        cfg.diverge_threshold = 1e200;
        let r = simulate(&c.plant, &c.ctrl, &c.channel, &cfg).unwrap();
        let bad = invariant_violations(&c.ctrl, &r);
        assert!(bad.is_empty(), "case {case}: {bad:?}");
        assert_eq!(r.states.len(), r.v_trace.len());
        assert_eq!(r.inputs.len() + 1, r.states.len());
        assert_eq!(r.trigger_times.len(), r.loss_trace.len());
    }
}

#[test]
fn replay_is_bit_identical() {
    let mut rng = Rng::new(7);
    for seed in 0..20 {
        let c = certified_case(&mut rng);
        let cfg = SimConfig::new(c.x0.clone(), 400, seed);
        let a = simulate(&c.plant, &c.ctrl, &c.channel, &cfg).unwrap();
        let b = simulate(&c.plant, &c.ctrl, &c.channel, &cfg).unwrap();
        assert_eq!(a, b);
        let bits: Vec<u64> = a.v_trace.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.v_trace.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, bits_b);
    }
}

#[test]
fn lossless_exchanges_contract_by_beta_each_step() {
    let mut rng = Rng::new(11);
    for _ in 0..50 {
        let c = certified_case(&mut rng);
        let ctrl = c.ctrl.clone().with_theta(1).unwrap();
        let mut cfg = SimConfig::new(c.x0.clone(), 200, 0);
        cfg.converge_threshold = 1e-250;
        let r = simulate(&c.plant, &ctrl, &LossChannel::never_fail(), &cfg).unwrap();
        let v0 = r.v_trace[0];
        for (t, &v) in r.v_trace.iter().enumerate() {
            assert!(v <= ctrl.beta().powi(t as i32) * v0 * (1.0 + 1e-8) + 1e-300, "t={t}");
        }
        assert_eq!(r.loss_trace.total(), 0);
    }
}

#[test]
fn scalar_lossless_trajectory_is_geometric() {
    let plant = PlantModel::scalar(2.0, 1.0).unwrap();
    let mut cfg = SimConfig::new(Vector::new(vec![1.0]).unwrap(), 30, 0);
    cfg.converge_threshold = 1e-300;
    let r = simulate(&plant, &scalar_ctrl(-1.75, 0.0625, 1), &LossChannel::never_fail(), &cfg).unwrap();
    for (t, x) in r.states.iter().enumerate() {
        assert_eq!(x.as_slice()[0], 0.25f64.powi(t as i32));
    }
    assert_eq!(r.verdict, Verdict::Inconclusive);
}

#[test]
fn all_lost_doubles_the_state() {
    let plant = PlantModel::scalar(2.0, 1.0).unwrap();
    let channel = LossChannel::new(MarkovLossModel::bernoulli(1.0).unwrap(), AttackStrategy::None, Dependence::Independent)
        .unwrap();
    let r = simulate(&plant, &scalar_ctrl(-1.75, 0.0625, 1), &channel, &SimConfig::new(Vector::new(vec![1.0]).unwrap(), 100, 0))
        .unwrap();
    assert_eq!(r.verdict, Verdict::Diverged);
    assert_eq!(r.final_state().as_slice()[0], 2f64.powi(30));
    assert!(r.ratio_series.iter().all(|&x| x == 1.0));
}

#[test]
fn large_theta_without_drift_waits_theta_steps() {
    // x+ = 0.5 x with zero gain: V drops by 4 per step, below beta = 0.5, so
    // only the theta rule triggers.
    let plant = PlantModel::scalar(0.5, 1.0).unwrap();
    let mut cfg = SimConfig::new(Vector::new(vec![1.0]).unwrap(), 40, 0);
    cfg.converge_threshold = 0.0;
    let r = simulate(&plant, &scalar_ctrl(0.0, 0.5, 7), &LossChannel::never_fail(), &cfg).unwrap();
    assert_eq!(r.trigger_times, vec![0, 7, 14, 21, 28, 35]);
    assert!(r.trigger_gaps().iter().all(|&g| g == 7));
}

#[test]
fn exponent_series_matches_counts() {
    let t = LossTrace::from_bits([true, false, false, true]);
    let s = lyap_exponent_series(&t, 0.0625, 4.0);
    let want = [4f64.ln(), (0.0625f64.ln() + 4f64.ln()) / 2.0];
    assert!((s[0] - want[0]).abs() < 1e-15 && (s[1] - want[1]).abs() < 1e-15);
    assert!((s[3] - (2.0 * 0.0625f64.ln() + 2.0 * 4f64.ln()) / 4.0).abs() < 1e-15);
}
