//! Almost-sure stability and instability certificates, the LMI pair in
//! `(Q, M)` coordinates, and the feedback-gain design search.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, PlantModel};
use crate::linalg::{
    cholesky, max_generalized_eig, pole_place_si, solve_stein, sym_eigenvalues,
    LinalgError, Mat,
};

/// Largest condition number accepted when inverting `Q`.
pub const MAX_Q_CONDITION: f64 = 1e12;
/// Relative tolerance on the matrix conditions, scaled by `||P||_F`.
pub const MATRIX_REL_TOL: f64 = 1e-9;
/// Relative width of the band around zero in which the scalar condition is
/// treated as a tie, scaled by `|ln beta| + |ln phi|`.
pub const TIE_REL_TOL: f64 = 1e-12;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_GRID_POINTS: usize = 32;
pub const DEFAULT_GRID_FLOOR: f64 = 1e-4;

const GAMMAS: [f64; 4] = [0.0, 0.3, 0.6, 0.9];
const OMEGAS: [f64; 3] = [0.0, PI / 4.0, PI / 2.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("invalid certificate input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("no feasible gain on the beta grid ({candidates} candidates tried); best (1-rho) ln beta + rho ln phi = {best_value}")]
    Infeasible { best_value: f64, candidates: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

pub type Result<T> = std::result::Result<T, CertifyError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CertifyError::Validation(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    /// `lambda_min(beta P - (A+BK)^T P (A+BK))`.
    pub closed_loop_margin: f64,
    /// `lambda_min(phi P - A^T P A)`.
    pub open_loop_margin: f64,
    /// `(1 - rho) ln beta + rho ln phi`.
    pub exponent_bound: f64,
    pub pass: bool,
    /// `lambda_max(P) / lambda_min(P)`.
    pub nu: f64,
    /// Tolerance applied to the two matrix margins.
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    /// `lambda_min((A+BK)^T P (A+BK) - beta P)`.
    pub closed_loop_margin: f64,
    /// `lambda_min(A^T P A - phi P)`.
    pub open_loop_margin: f64,
    /// `(1 - sigma) ln beta + sigma ln phi`.
    pub exponent_bound: f64,
    pub pass: bool,
    pub tol: f64,
    /// Set when the certificate was requested for a controller that does not
    /// attempt an exchange at every step; the result then has no guarantee.
    pub theta_warning: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub k: Mat,
    pub p: Mat,
    pub beta: f64,
    pub phi: f64,
    pub q: Mat,
    pub m: Mat,
    pub certificate: StabilityCertificate,
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return invalid(format!("{name} must lie in [0, 1], got {v}"));
    }
    Ok(())
}

fn check_common(plant: &PlantModel, k: &Mat, p: &Mat, beta: f64, phi: f64) -> Result<()> {
    let n = plant.n();
    if k.rows() != plant.m() || k.cols() != n {
        return invalid(format!(
            "K is {}x{}, plant needs {}x{}",
            k.rows(),
            k.cols(),
            plant.m(),
            n
        ));
    }
    if p.rows() != n || p.cols() != n {
        return invalid(format!("P is {}x{}, plant order is {n}", p.rows(), p.cols()));
    }
    cholesky(p).map_err(|e| CertifyError::Validation(format!("P is not positive definite: {e}")))?;
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("beta must lie in (0, 1), got {beta}"));
    }
    if !(phi >= 1.0 && phi.is_finite()) {
        return invalid(format!("phi must be finite and at least 1, got {phi}"));
    }
    Ok(())
}

fn tie_band(beta: f64, phi: f64) -> f64 {
    TIE_REL_TOL * (beta.ln().abs() + phi.ln().abs())
}

/// `(1 - r) ln beta + r ln phi`.
pub fn exponent_bound(beta: f64, phi: f64, r: f64) -> f64 {
    (1.0 - r) * beta.ln() + r * phi.ln()
}

/// Checks the sufficient conditions for almost-sure asymptotic stability
/// when the long-run loss ratio is at most `rho`.
pub fn check_stability(
    plant: &PlantModel,
    k: &Mat,
    p: &Mat,
    beta: f64,
    phi: f64,
    rho: f64,
) -> Result<StabilityCertificate> {
    check_common(plant, k, p, beta, phi)?;
    check_unit_interval("rho", rho)?;
    let f = plant.closed_loop(k)?;
    let tol = MATRIX_REL_TOL * p.frobenius_norm();
    let closed = p.scale(beta).sub(&p.congruence(&f)?)?.symmetrize();
    let open = p.scale(phi).sub(&p.congruence(plant.a())?)?.symmetrize();
    let closed_loop_margin = sym_eigenvalues(&closed)?.min();
    let open_loop_margin = sym_eigenvalues(&open)?.min();
    let bound = exponent_bound(beta, phi, rho);
    let pe = sym_eigenvalues(p)?;
    let pass = closed_loop_margin >= -tol && open_loop_margin >= -tol && bound < -tie_band(beta, phi);
    Ok(StabilityCertificate {
        closed_loop_margin,
        open_loop_margin,
        exponent_bound: bound,
        pass,
        nu: pe.max() / pe.min(),
        tol,
    })
}

/// Checks the sufficient conditions for almost-sure divergence when the
/// long-run loss ratio is at least `sigma` and exchanges are attempted at
/// every step (`theta == 1`).
pub fn check_instability(
    plant: &PlantModel,
    k: &Mat,
    p_hat: &Mat,
    beta_hat: f64,
    phi_hat: f64,
    sigma: f64,
    theta: u64,
) -> Result<InstabilityCertificate> {
    check_common(plant, k, p_hat, beta_hat, phi_hat)?;
    check_unit_interval("sigma", sigma)?;
    let f = plant.closed_loop(k)?;
    let tol = MATRIX_REL_TOL * p_hat.frobenius_norm();
    let closed = p_hat.congruence(&f)?.sub(&p_hat.scale(beta_hat))?.symmetrize();
    let open = p_hat.congruence(plant.a())?.sub(&p_hat.scale(phi_hat))?.symmetrize();
    let closed_loop_margin = sym_eigenvalues(&closed)?.min();
    let open_loop_margin = sym_eigenvalues(&open)?.min();
    let bound = exponent_bound(beta_hat, phi_hat, sigma);
    let pass = closed_loop_margin >= -tol
        && open_loop_margin >= -tol
        && bound > tie_band(beta_hat, phi_hat);
    Ok(InstabilityCertificate {
        closed_loop_margin,
        open_loop_margin,
        exponent_bound: bound,
        pass,
        tol,
        theta_warning: theta != 1,
    })
}

/// Stationary failure fraction `p01 / (p01 + p10)` of a homogeneous chain.
pub fn markov_rho(p01: f64, p10: f64) -> Result<f64> {
    check_unit_interval("p01", p01)?;
    check_unit_interval("p10", p10)?;
    if p01 + p10 == 0.0 {
        return invalid("p01 = p10 = 0 gives a reducible chain");
    }
    Ok(p01 / (p01 + p10))
}

/// Smallest eigenvalues of `[[beta Q, (AQ+BM)^T], [AQ+BM, Q]]` and
/// `[[phi Q, (AQ)^T], [AQ, Q]]`.
pub fn lmi_pair_margins(q: &Mat, m: &Mat, plant: &PlantModel, beta: f64, phi: f64) -> Result<(f64, f64)> {
    let n = plant.n();
    if q.rows() != n || q.cols() != n {
        return invalid(format!("Q is {}x{}, plant order is {n}", q.rows(), q.cols()));
    }
    if m.rows() != plant.m() || m.cols() != n {
        return invalid(format!("M is {}x{}, plant needs {}x{n}", m.rows(), m.cols(), plant.m()));
    }
    if !q.is_symmetric(1e-9) {
        return invalid("Q must be symmetric");
    }
    let aq = plant.a().matmul(q)?;
    let aqbm = aq.add(&plant.b().matmul(m)?)?;
    let first = Mat::block2(&q.scale(beta), &aqbm.transpose(), &aqbm, q)?.symmetrize();
    let second = Mat::block2(&q.scale(phi), &aq.transpose(), &aq, q)?.symmetrize();
    Ok((sym_eigenvalues(&first)?.min(), sym_eigenvalues(&second)?.min()))
}

/// True when `Q` is positive definite and both LMI blocks are PSD within
/// `tol`.
pub fn lmi_pair_feasible(q: &Mat, m: &Mat, plant: &PlantModel, beta: f64, phi: f64, tol: f64) -> Result<bool> {
    let (first, second) = lmi_pair_margins(q, m, plant, beta, phi)?;
    Ok(cholesky(q).is_ok() && first >= -tol && second >= -tol)
}

/// `(K, P) = (M Q^{-1}, Q^{-1})`.
pub fn gain_from_qm(q: &Mat, m: &Mat) -> Result<(Mat, Mat)> {
    if !q.is_square() || m.cols() != q.rows() {
        return invalid(format!(
            "Q is {}x{} and M is {}x{}",
            q.rows(),
            q.cols(),
            m.rows(),
            m.cols()
        ));
    }
    cholesky(q).map_err(|e| CertifyError::Validation(format!("Q is not positive definite: {e}")))?;
    let cond = q.condition_1()?;
    if cond > MAX_Q_CONDITION {
        return Err(CertifyError::Numeric(format!("Q is ill-conditioned (cond_1 = {cond:e})")));
    }
    let p = q.inverse()?.symmetrize();
    let k = m.matmul(&p)?;
    Ok((k, p))
}

/// `phi` on the curve `(1 - rho) ln beta + rho ln phi = -delta`.
pub fn curve_phi(beta: f64, rho: f64, delta: f64) -> f64 {
    (-((1.0 - rho) * beta.ln() + delta) / rho).exp()
}

/// Upper end `e^{-delta / (1 - rho)}` of the admissible beta range.
pub fn beta_ceiling(rho: f64, delta: f64) -> f64 {
    (-delta / (1.0 - rho)).exp()
}

/// Geometric grid from the ceiling down to `1e-4` (or the ceiling itself
/// if it is already lower).
pub fn default_beta_grid(rho: f64, delta: f64) -> Vec<f64> {
    let hi = beta_ceiling(rho, delta);
    let lo = DEFAULT_GRID_FLOOR.min(hi);
    let steps = (DEFAULT_GRID_POINTS - 1) as f64;
    (0..DEFAULT_GRID_POINTS)
        .map(|j| hi * (lo / hi).powf(j as f64 / steps))
        .collect()
}

/// Closed-loop spectra tried for a given beta: radius `gamma sqrt(beta)`,
/// angles `+-omega`, conjugate pairs padded with one real pole when `n` is
/// odd. `gamma = 0` is the deadbeat gain.
fn candidate_spectra(n: usize, beta: f64) -> Vec<Vec<Complex64>> {
    let mut out = Vec::new();
    for &gamma in &GAMMAS {
        let r = gamma * beta.sqrt();
        for (j, &omega) in OMEGAS.iter().enumerate() {
            if gamma == 0.0 && j > 0 {
                break;
            }
            let mut poles = Vec::with_capacity(n);
            for _ in 0..n / 2 {
                poles.push(Complex64::from_polar(r, omega));
                poles.push(Complex64::from_polar(r, -omega));
            }
            if n % 2 == 1 {
                poles.push(Complex64::new(r, 0.0));
            }
            if !out.contains(&poles) {
                out.push(poles);
            }
        }
    }
    out
}

fn validate_design(plant: &PlantModel, rho: f64, delta: f64, grid: &[f64]) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return invalid(format!("rho must lie in (0, 1), got {rho}"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    if plant.m() != 1 {
        return invalid(format!(
            "gain design supports single-input plants only, got {} inputs",
            plant.m()
        ));
    }
    let ceiling = beta_ceiling(rho, delta);
    if grid.is_empty() {
        return invalid("beta grid is empty");
    }
    for (j, &b) in grid.iter().enumerate() {
        if !(b > 0.0 && b <= ceiling * (1.0 + 1e-12)) {
            return invalid(format!("beta grid entry {b} outside (0, {ceiling}]"));
        }
        if j > 0 && b >= grid[j - 1] {
            return invalid("beta grid must be strictly descending");
        }
    }
    Ok(())
}

/// Searches the curve `(1 - rho) ln beta + rho ln phi = -delta` over
/// `beta_grid` (descending) for a gain whose certificate passes.
///
/// Candidate gains place the closed-loop poles inside the disc of radius
/// `sqrt(beta)`; `P` solves `F^T P F - beta P = -eps I` and is scaled to unit
/// Frobenius norm. The first passing candidate in grid order wins.
pub fn design_gain(plant: &PlantModel, rho: f64, delta: f64, beta_grid: &[f64]) -> Result<DesignResult> {
    validate_design(plant, rho, delta, beta_grid)?;
    let n = plant.n();
    let b = plant.input_column().expect("single input checked");
    let eps = 1e-6 * plant.a().frobenius_norm().powi(2).max(f64::MIN_POSITIVE);
    let rhs = Mat::identity(n).scale(eps);
    let mut best = f64::INFINITY;
    let mut candidates = 0usize;
    for &beta in beta_grid {
        let phi = curve_phi(beta, rho, delta);
        for poles in candidate_spectra(n, beta) {
            let kvec = pole_place_si(plant.a(), &b, &poles)?;
            // pole_place_si returns k with eig(A - b k) = poles; the control
            // law uses u = K x, so K = -k.
            let k = Mat::new(1, n, kvec.as_slice().iter().map(|v| -v).collect())?;
            let f = plant.closed_loop(&k)?;
            candidates += 1;
            let p = match solve_stein(&f, beta, &rhs) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let p = p.scale(1.0 / p.frobenius_norm()).symmetrize();
            let cert = check_stability(plant, &k, &p, beta, phi.max(1.0), rho)?;
            if cert.pass {
                let q = p.inverse()?.symmetrize();
                let m = k.matmul(&q)?;
                return Ok(DesignResult {
                    k,
                    p,
                    beta,
                    phi: phi.max(1.0),
                    q,
                    m,
                    certificate: cert,
                });
            }
            let beta_k = max_generalized_eig(&p.congruence(&f)?, &p)?;
            let phi_min = max_generalized_eig(&p.congruence(plant.a())?, &p)?.max(1.0);
            if beta_k > 0.0 {
                best = best.min(exponent_bound(beta_k, phi_min, rho));
            }
        }
    }
    Err(CertifyError::Infeasible {
        best_value: best,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> PlantModel {
        PlantModel::new(
            Mat::from_rows(&[[1.0, 0.1], [-0.5, 1.1]]).unwrap(),
            Mat::from_rows(&[[0.1], [1.2]]).unwrap(),
        )
        .unwrap()
    }

    fn reference_qm() -> (Mat, Mat) {
        (
            Mat::from_rows(&[[0.618, -2.119], [-2.119, 28.214]]).unwrap(),
            Mat::from_rows(&[[0.202, -20.405]]).unwrap(),
        )
    }

    fn scalar() -> PlantModel {
        PlantModel::scalar(2.0, 1.0).unwrap()
    }

    fn s(v: f64) -> Mat {
        Mat::scalar(v).unwrap()
    }

    #[test]
    fn example1_lmi_and_certificate() {
        let plant = example1();
        let (q, m) = reference_qm();
        assert!(lmi_pair_feasible(&q, &m, &plant, 0.55, 2.4516, 1e-9).unwrap());
        let (k, p) = gain_from_qm(&q, &m).unwrap();
        assert!((k[(0, 0)] + 2.900).abs() < 1e-3 && (k[(0, 1)] + 0.941).abs() < 1e-3);
        let c = check_stability(&plant, &k, &p, 0.55, 2.4516, 0.4).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(c.exponent_bound < 0.0 && c.exponent_bound > -1e-3);
    }

    #[test]
    fn scalar_certificates() {
        let plant = scalar();
        let c = check_stability(&plant, &s(-1.75), &s(1.0), 0.0625, 4.0, 0.62).unwrap();
        assert!(c.pass);
        let c = check_stability(&plant, &s(-1.75), &s(1.0), 0.0625, 4.0, 0.7).unwrap();
        assert!(!c.pass);
        assert!((c.exponent_bound - (0.3 * 0.0625f64.ln() + 0.7 * 4f64.ln())).abs() < 1e-12);
        let i = check_instability(&plant, &s(-1.75), &s(1.0), 0.0625, 4.0, 0.68, 1).unwrap();
        assert!(i.pass && (i.exponent_bound - 0.0555).abs() < 1e-3);
        assert!(!i.theta_warning);
        let tie = check_instability(&plant, &s(-1.75), &s(1.0), 0.0625, 4.0, 2.0 / 3.0, 1).unwrap();
        assert!(!tie.pass);
        let tie = check_stability(&plant, &s(-1.75), &s(1.0), 0.0625, 4.0, 2.0 / 3.0).unwrap();
        assert!(!tie.pass);
        let zero = check_instability(&plant, &s(-1.75), &s(1.0), 0.0625, 4.0, 0.0, 5).unwrap();
        assert!(!zero.pass && zero.theta_warning);
    }

    #[test]
    fn certificate_input_errors() {
        let plant = scalar();
        assert!(check_stability(&plant, &Mat::zeros(1, 2), &s(1.0), 0.5, 4.0, 0.5).is_err());
        assert!(check_stability(&plant, &s(-1.75), &s(-1.0), 0.5, 4.0, 0.5).is_err());
        assert!(check_stability(&plant, &s(-1.75), &s(1.0), 0.5, 0.5, 0.5).is_err());
        assert!(check_stability(&plant, &s(-1.75), &s(1.0), 0.5, 4.0, 1.5).is_err());
    }

    #[test]
    fn markov_rho_examples() {
        assert!((markov_rho(0.2, 0.8).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(markov_rho(0.37, 0.37).unwrap(), 0.5);
        assert!((markov_rho(0.3, 0.7).unwrap() - 0.3).abs() < 1e-15);
        assert!(markov_rho(0.0, 0.0).is_err());
    }

    #[test]
    fn lmi_trivial_cases() {
        let plant = example1();
        let q = Mat::identity(2);
        let m = Mat::zeros(1, 2);
        assert!(!lmi_pair_feasible(&q, &m, &plant, 0.01, 2.4516, 1e-9).unwrap());
        let zero = PlantModel::new(Mat::zeros(2, 2), Mat::from_rows(&[[0.1], [1.2]]).unwrap()).unwrap();
        assert!(lmi_pair_feasible(&q, &m, &zero, 0.3, 1.0, 1e-9).unwrap());
        assert!(lmi_pair_feasible(&Mat::identity(3), &m, &plant, 0.3, 1.0, 1e-9).is_err());
    }

    #[test]
    fn gain_from_qm_examples() {
        let k0 = Mat::from_rows(&[[0.3, -1.2]]).unwrap();
        let (k, p) = gain_from_qm(&Mat::identity(2), &k0).unwrap();
        assert_eq!(k, k0);
        assert_eq!(p, Mat::identity(2));
        let (k, p) = gain_from_qm(&s(2.0), &s(-3.5)).unwrap();
        assert_eq!((k[(0, 0)], p[(0, 0)]), (-1.75, 0.5));
        let bad = Mat::diag(&[1.0, 1e-13]).unwrap();
        assert!(matches!(gain_from_qm(&bad, &Mat::zeros(1, 2)), Err(CertifyError::Numeric(_))));
    }

    #[test]
    fn design_example1() {
        let plant = example1();
        let grid: Vec<f64> = (1..=11).rev().map(|j| j as f64 * 0.05).collect();
        let d = design_gain(&plant, 0.4, 0.01, &grid).unwrap();
        assert!(d.certificate.pass);
        assert!(lmi_pair_feasible(&d.q, &d.m, &plant, d.beta, d.phi, 1e-9).unwrap());
        let (k, p) = gain_from_qm(&d.q, &d.m).unwrap();
        assert!(k.sub(&d.k).unwrap().frobenius_norm() < 1e-8);
        assert!(p.sub(&d.p).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn design_scalar_feasible_and_infeasible() {
        let plant = scalar();
        let d = design_gain(&plant, 0.6, 0.01, &default_beta_grid(0.6, 0.01)).unwrap();
        assert!(d.certificate.pass && d.beta < 0.125);
        let err = design_gain(&plant, 0.99, 0.01, &default_beta_grid(0.99, 0.01)).unwrap_err();
        assert!(matches!(err, CertifyError::Infeasible { best_value, .. } if best_value > 0.0));
    }

    #[test]
    fn design_rejects_bad_input() {
        let plant = scalar();
        assert!(design_gain(&plant, 0.6, 0.01, &[0.5, 0.9]).is_err());
        assert!(design_gain(&plant, 0.6, 0.01, &[0.99]).is_err());
        assert!(design_gain(&plant, 1.0, 0.01, &[0.1]).is_err());
        let mimo = PlantModel::new(Mat::identity(2), Mat::identity(2)).unwrap();
        assert!(design_gain(&mimo, 0.4, 0.01, &[0.5]).is_err());
    }
}
