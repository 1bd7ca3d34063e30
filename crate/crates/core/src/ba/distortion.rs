//! Expected-distortion variant of the alternating solver.
//!
//! Minimizes `g(p) = E[d(A,R)] + mu1 I(A;X) + mu2 I(A,Z;X)` over release
//! channels `p(a|z,x)`. The problem is convex, so the iteration converges to
//! the global minimum; interior optima additionally satisfy a self-consistency
//! fixed-point equation that [`consistency_residual`] measures.

use super::{
    achieved_distortion, init_aux, mean_distortion_table, refresh_aux, update_channel, AuxDists,
    BaOptions, BaResult, JointStats, LagrangePair,
};
use crate::error::{Error, Result};
use crate::prob::{
    expected_distortion, leakage_collusion, leakage_individual, Channel, DistortionMatrix, Joint3,
    CLAMP_FLOOR,
};

/// Channel plus auxiliaries, for stepping the iteration manually.
#[derive(Clone, Debug)]
pub struct BaState {
    pub channel: Channel,
    pub aux: AuxDists,
}

fn check_inputs(j: &Joint3, d: &DistortionMatrix) -> Result<()> {
    if d.n_requests() != j.n_r() {
        return Err(Error::DimensionMismatch {
            what: "distortion request axis".into(),
            expected: j.n_r(),
            got: d.n_requests(),
        });
    }
    Ok(())
}

/// The dual inner objective `E[d] + mu1 I(A;X) + mu2 I(A,Z;X)` with the
/// budget constants dropped. Non-negative for every valid input.
pub fn dual_objective_g(
    ch: &Channel,
    j: &Joint3,
    d: &DistortionMatrix,
    mu: LagrangePair,
) -> Result<f64> {
    Ok(expected_distortion(ch, j, d)?
        + mu.mu1 * leakage_individual(ch, j)?
        + mu.mu2 * leakage_collusion(ch, j)?)
}

/// The alternating-minimization surrogate objective
/// `f(p; q1, q2, q3)` evaluated at arbitrary auxiliaries, with the same
/// constants dropped as in [`dual_objective_g`]. When the auxiliaries are the
/// distributions induced by `ch`, this equals `dual_objective_g(ch, ...)`;
/// it can be `+inf` for inconsistent auxiliaries with zeros.
pub fn aux_objective_f(
    ch: &Channel,
    aux: &AuxDists,
    j: &Joint3,
    d: &DistortionMatrix,
    mu: LagrangePair,
) -> Result<f64> {
    check_inputs(j, d)?;
    let stats = JointStats::new(j);
    let dbar = mean_distortion_table(&stats, d);
    let n_a = ch.n_symbols();
    let mut acc = 0.0;
    for z in 0..stats.n_z {
        for x in 0..stats.n_x {
            let mass = stats.pzx[z * stats.n_x + x];
            for a in 0..n_a {
                let w = ch.get(a, z, x) * mass;
                if w <= 0.0 {
                    continue;
                }
                let mut term = dbar[(z * stats.n_x + x) * n_a + a]
                    + mu.sum() * ch.get(a, z, x).log2();
                if mu.mu1 > 0.0 {
                    term -= mu.mu1 * (aux.q1(a).log2() + aux.q2(z, a, x).log2());
                }
                if mu.mu2 > 0.0 {
                    term -= mu.mu2 * aux.q3(a, z).log2();
                }
                acc += w * term;
            }
        }
    }
    // Constant offset that restores the value of the true objective: the
    // multiplier-weighted part of the fixed (z, x) statistics.
    Ok(acc + mu.sum() * stats.mi_zx - mu.mu1 * stats.h_z)
}

/// One full iteration: channel update from the current auxiliaries, then
/// auxiliary refresh from the new channel.
pub fn ba_update_step(
    j: &Joint3,
    d: &DistortionMatrix,
    mu: LagrangePair,
    state: &mut BaState,
) -> Result<()> {
    check_inputs(j, d)?;
    if mu.is_zero() {
        return Err(Error::InvalidInput(
            "mu1 = mu2 = 0 has no iterative update; use the closed form".into(),
        ));
    }
    let stats = JointStats::new(j);
    let dbar = mean_distortion_table(&stats, d);
    update_channel(&stats, &state.aux, &dbar, mu, &mut state.channel)?;
    refresh_aux(&stats, j, &state.channel, &mut state.aux);
    Ok(())
}

/// Closed-form optimum at `mu1 = mu2 = 0`: release the symbol with minimal
/// conditional mean distortion per `(z, x)`, ties toward the lowest index.
pub(crate) fn min_distortion_channel(j: &Joint3, d: &DistortionMatrix) -> Channel {
    let stats = JointStats::new(j);
    let dbar = mean_distortion_table(&stats, d);
    let n_a = d.n_symbols();
    Channel::deterministic(n_a, j.n_z(), j.n_x(), |z, x| {
        let base = (z * j.n_x() + x) * n_a;
        let mut best = 0;
        for a in 1..n_a {
            if dbar[base + a] < dbar[base + best] {
                best = a;
            }
        }
        best
    })
}

/// Solve the inner minimization at fixed multipliers.
///
/// Returns the converged channel, the per-sweep objective trace (monotone
/// non-increasing), and the achieved utility/leakage triple. When `max_iters`
/// is exhausted the best iterate so far is still returned with
/// `converged = false`.
pub fn ba_distortion_run(
    j: &Joint3,
    d: &DistortionMatrix,
    mu: LagrangePair,
    opts: &BaOptions,
) -> Result<BaResult> {
    check_inputs(j, d)?;
    opts.validate()?;
    let n_a = d.n_symbols();

    if mu.is_zero() {
        let ch = min_distortion_channel(j, d);
        let g = dual_objective_g(&ch, j, d, mu)?;
        let achieved = achieved_distortion(&ch, j, d)?;
        return Ok(BaResult {
            channel: ch,
            iterations: 0,
            trace: vec![g],
            achieved,
            converged: true,
        });
    }

    let stats = JointStats::new(j);
    let dbar = mean_distortion_table(&stats, d);
    let mut aux = init_aux(&stats, n_a, opts.init_mode, opts.init_seed, false);
    let mut channel = Channel::uniform(n_a, j.n_z(), j.n_x());
    let mut prev: Option<Channel> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=opts.max_iters {
        update_channel(&stats, &aux, &dbar, mu, &mut channel)?;
        refresh_aux(&stats, j, &channel, &mut aux);
        trace.push(dual_objective_g(&channel, j, d, mu)?);
        iterations = t;
        if let Some(p) = &prev {
            if channel.linf_distance(p) <= opts.tol {
                converged = true;
                break;
            }
        }
        prev = Some(channel.clone());
    }

    let achieved = achieved_distortion(&channel, j, d)?;
    Ok(BaResult {
        channel,
        iterations,
        trace,
        achieved,
        converged,
    })
}

/// L-infinity gap between `ch` and the fixed-point right-hand side evaluated
/// at the auxiliaries induced by `ch`, restricted to the support of `ch`.
///
/// Zero (up to float noise) exactly at interior optima; boundary optima may
/// carry off-support gaps, which is why those entries are ignored.
pub fn consistency_residual(
    ch: &Channel,
    j: &Joint3,
    d: &DistortionMatrix,
    mu: LagrangePair,
) -> Result<f64> {
    check_inputs(j, d)?;
    if mu.sum() <= 0.0 {
        return Err(Error::InvalidInput(
            "consistency residual needs mu1 + mu2 > 0".into(),
        ));
    }
    let stats = JointStats::new(j);
    let dbar = mean_distortion_table(&stats, d);
    let mut aux = init_aux(&stats, ch.n_symbols(), super::InitMode::Uniform, 0, false);
    refresh_aux(&stats, j, ch, &mut aux);
    let mut rhs = Channel::uniform(ch.n_symbols(), ch.n_z(), ch.n_x());
    update_channel(&stats, &aux, &dbar, mu, &mut rhs)?;
    let mut gap = 0.0_f64;
    for z in 0..ch.n_z() {
        for x in 0..ch.n_x() {
            for a in 0..ch.n_symbols() {
                if ch.get(a, z, x) > CLAMP_FLOOR {
                    gap = gap.max((ch.get(a, z, x) - rhs.get(a, z, x)).abs());
                }
            }
        }
    }
    Ok(gap)
}
