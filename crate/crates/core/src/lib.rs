//! Adaptive privacy-utility release mechanisms over finite alphabets.
//!
//! A data handler answers a sequence of requests about a private database
//! `X`. Each answer is drawn from a release channel `p(a | z, x)` chosen to
//! maximize utility for the requester while bounding what the recipient
//! learns about `X` — individually (`I(A;X) <= eps`) and jointly with every
//! previously released symbol (`I(A,Z;X) <= delta`), should the recipients
//! collude.
//!
//! The crate provides:
//!
//! - [`prob`]: exact finite-alphabet probability machinery (marginals,
//!   conditionals, entropy, KL divergence, mutual information, induced
//!   joints).
//! - [`ba`]: Blahut-Arimoto style alternating minimizers for the dual inner
//!   problem at fixed multipliers, for expected-distortion and
//!   mutual-information utilities.
//! - [`curve`]: multiplier-grid sweeps tracing the distortion- and
//!   information-privacy-collusion surfaces, with time-sharing
//!   densification.
//! - [`solver`]: budget-targeted solves by nested bisection over the
//!   multipliers, with closed-form and time-sharing fallbacks.
//! - [`session`]: sequential multi-party release sessions with budget
//!   accounting and reproducible sampling.
//!
//! Information quantities are in bits throughout (base-2 logarithms).

pub mod ba;
pub mod curve;
pub mod error;
pub mod exec;
pub mod prob;
pub mod session;
pub mod solver;

pub use ba::distortion::{
    aux_objective_f, ba_distortion_run, ba_update_step, consistency_residual, dual_objective_g,
    BaState,
};
pub use ba::mutual_info::{
    ba_mi_run, mi_objective, pnn_objective_solve, q4_update, MiCandidate, MiOptions, MiResult,
};
pub use ba::{AchievedMetrics, AuxDists, BaOptions, BaResult, InitMode, LagrangePair};
pub use curve::{
    export_curve, spaced_axis, sweep, timeshare_densify, write_curve_csv, CurvePoint,
    MultiplierGrid, Problem, Provenance, Spacing, SweepFailure, SweepOptions, SweepOutcome,
};
pub use error::{Error, Result};
pub use exec::{run_indexed, ExecMode};
pub use prob::{
    expected_distortion, induced_joint4, kl_divergence, leakage_collusion, leakage_individual,
    mutual_information, utility_mi, validate_joint, Alphabet, Channel, ConditionalTensor,
    DistortionMatrix, Joint2, Joint3, Joint4, MarginalTensor, Pmf, Var,
};
pub use session::{
    build_step_joint, cumulative_leakage, handle_request, session_new, session_new_realized,
    write_transcript, ReleaseRecord, RequestChannel, RequestSpec, SessionState,
};
pub use solver::{solve_for_budget, timeshare_to_target, Budget, SolvePath, SolveReport};
