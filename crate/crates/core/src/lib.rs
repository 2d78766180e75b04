//! Event-triggered control of discrete-time linear plants over networks with
//! random (Markov) packet losses and budget-constrained jamming attacks.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: small dense matrices with symmetric eigenvalues, Stein solves
//!   and single-input pole placement.
//! * [`rng`]: the reproducible per-path random stream.
//! * [`loss`]: random-loss Markov chains and attack strategies, combined into
//!   a channel that marks each exchange attempt as failed or not.
//! * [`tail`]: Chernoff-type tail bounds and admissible loss-ratio ranges,
//!   with a brute-force enumeration oracle to check them.
//! * [`control`]: closed-loop simulation with Lyapunov-level event triggering.
//! * [`certify`]: almost-sure stability and instability certificates, plus
//!   the gain design search built on the LMI pair check.
//! * [`experiment`]: JSON experiment files and bundled presets, run as Monte
//!   Carlo batches with CSV/JSON output.

pub mod certify;
pub mod control;
pub mod experiment;
pub mod linalg;
pub mod loss;
pub mod rng;
pub mod tail;

pub use certify::{
    check_instability, check_stability, design_gain, gain_from_qm, lmi_pair_feasible, markov_rho,
    DesignResult, InstabilityCertificate, StabilityCertificate,
};
pub use control::{simulate, PlantModel, SimConfig, SimResult, TriggerController, Verdict};
pub use linalg::{Mat, Vector};
pub use loss::{AttackStrategy, Dependence, LossChannel, LossTrace, MarkovLossModel};
pub use rng::Rng;
pub use tail::TailBoundSpec;
