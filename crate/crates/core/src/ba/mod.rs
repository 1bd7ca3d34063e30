//! Alternating-minimization (Blahut-Arimoto style) solvers for the inner
//! minimization of the dual release problem at fixed multipliers.
//!
//! Two variants share one engine:
//!
//! - [`distortion`]: minimizes `E[d(A,R)] + mu1 I(A;X) + mu2 I(A,Z;X)`.
//!   Convex; converges to the global minimum.
//! - [`mutual_info`]: minimizes `-I(A;R) + mu1 I(A;X) + mu2 I(A,Z;X)`.
//!   Non-convex; solved to local optimality with multiple random starts.
//!
//! Each iteration updates the channel slice-by-slice from the auxiliary
//! distributions, then refreshes the auxiliaries from the new channel. The
//! channel update normalizes in log2 space (log-sum-exp) because the
//! `1/(mu1+mu2)` exponent can magnify dynamic range enormously.

use crate::error::{Error, Result};
use crate::prob::{
    clamp_and_renormalize, leakage_collusion, leakage_individual, mutual_information, Channel,
    DistortionMatrix, Joint3,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod distortion;
pub mod mutual_info;

/// Floor applied to auxiliary distributions at initialization so every
/// element starts strictly positive.
pub const INIT_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Options and results
// ---------------------------------------------------------------------------

/// A pair of non-negative Lagrange multipliers: `mu1` prices individual
/// leakage, `mu2` prices collusion leakage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagrangePair {
    pub mu1: f64,
    pub mu2: f64,
}

impl LagrangePair {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        if !(mu1.is_finite() && mu2.is_finite()) || mu1 < 0.0 || mu2 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "multipliers must be finite and >= 0, got ({mu1}, {mu2})"
            )));
        }
        Ok(Self { mu1, mu2 })
    }

    pub fn sum(&self) -> f64 {
        self.mu1 + self.mu2
    }

    /// Both zero: handled by a closed-form path, not by iteration.
    pub fn is_zero(&self) -> bool {
        self.mu1 == 0.0 && self.mu2 == 0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitMode {
    /// Uniform auxiliary distributions.
    #[default]
    Uniform,
    /// Dirichlet(1, ..., 1) random slices from a seeded generator.
    RandomDirichlet,
}

#[derive(Clone, Copy, Debug)]
pub struct BaOptions {
    /// L-infinity channel-change convergence threshold.
    pub tol: f64,
    pub max_iters: usize,
    pub init_seed: u64,
    pub init_mode: InitMode,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 10_000,
            init_seed: 0,
            init_mode: InitMode::Uniform,
        }
    }
}

impl BaOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Utility and leakage of a channel, recomputed from first principles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AchievedMetrics {
    /// Expected distortion (lower is better) or mutual information in bits
    /// (higher is better), depending on the problem.
    pub utility: f64,
    /// Individual leakage `I(A; X)` in bits.
    pub eps_leak: f64,
    /// Collusion leakage `I(A, Z; X)` in bits.
    pub delta_leak: f64,
}

/// Outcome of one solver run.
#[derive(Clone, Debug)]
pub struct BaResult {
    pub channel: Channel,
    /// Number of full update sweeps performed.
    pub iterations: usize,
    /// Objective value after each sweep; non-increasing.
    pub trace: Vec<f64>,
    pub achieved: AchievedMetrics,
    /// False when `max_iters` was reached before the channel settled.
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Auxiliary distributions
// ---------------------------------------------------------------------------

/// The independent copies of the channel-induced distributions iterated by
/// the solvers: `q1(a)`, `q2(z | a, x)`, `q3(a | z)`, and (mutual-information
/// variant only) `q4(r | a)`.
#[derive(Clone, Debug)]
pub struct AuxDists {
    n_a: usize,
    n_r: usize,
    n_z: usize,
    n_x: usize,
    q1: Vec<f64>,
    q2: Vec<f64>,
    q3: Vec<f64>,
    q4: Option<Vec<f64>>,
}

impl AuxDists {
    pub fn q1(&self, a: usize) -> f64 {
        self.q1[a]
    }

    pub fn q2(&self, z: usize, a: usize, x: usize) -> f64 {
        self.q2[(a * self.n_x + x) * self.n_z + z]
    }

    pub fn q3(&self, a: usize, z: usize) -> f64 {
        self.q3[z * self.n_a + a]
    }

    pub fn q4(&self, r: usize, a: usize) -> Option<f64> {
        self.q4.as_ref().map(|q| q[a * self.n_r + r])
    }

    pub fn has_q4(&self) -> bool {
        self.q4.is_some()
    }
}

// ---------------------------------------------------------------------------
// Precomputed joint statistics
// ---------------------------------------------------------------------------

/// Fixed conditionals and marginals of the problem joint, shared by every
/// iteration.
#[derive(Clone, Debug)]
pub(crate) struct JointStats {
    pub n_r: usize,
    pub n_z: usize,
    pub n_x: usize,
    /// p(z, x), index z * n_x + x.
    pub pzx: Vec<f64>,
    /// p(z | x), same layout.
    pub pz_gx: Vec<f64>,
    /// p(x | z), same layout.
    pub px_gz: Vec<f64>,
    /// p(r | z, x), joint layout (r, z, x).
    pub pr_gzx: Vec<f64>,
    /// I(Z; X) in bits: the channel-independent collusion-leakage floor.
    pub mi_zx: f64,
    /// H(Z) in bits.
    pub h_z: f64,
}

impl JointStats {
    pub fn new(j: &Joint3) -> Self {
        let (n_r, n_z, n_x) = (j.n_r(), j.n_z(), j.n_x());
        let mut pzx = vec![0.0; n_z * n_x];
        for r in 0..n_r {
            for z in 0..n_z {
                for x in 0..n_x {
                    pzx[z * n_x + x] += j.get(r, z, x);
                }
            }
        }
        let mut px = vec![0.0; n_x];
        let mut pz = vec![0.0; n_z];
        for z in 0..n_z {
            for x in 0..n_x {
                px[x] += pzx[z * n_x + x];
                pz[z] += pzx[z * n_x + x];
            }
        }
        let mut pz_gx = vec![0.0; n_z * n_x];
        let mut px_gz = vec![0.0; n_z * n_x];
        for z in 0..n_z {
            for x in 0..n_x {
                pz_gx[z * n_x + x] = if px[x] > 0.0 {
                    pzx[z * n_x + x] / px[x]
                } else {
                    1.0 / n_z as f64
                };
                px_gz[z * n_x + x] = if pz[z] > 0.0 {
                    pzx[z * n_x + x] / pz[z]
                } else {
                    1.0 / n_x as f64
                };
            }
        }
        let mut pr_gzx = vec![0.0; n_r * n_z * n_x];
        for z in 0..n_z {
            for x in 0..n_x {
                let mass = pzx[z * n_x + x];
                for r in 0..n_r {
                    pr_gzx[(r * n_z + z) * n_x + x] = if mass > 0.0 {
                        j.get(r, z, x) / mass
                    } else {
                        1.0 / n_r as f64
                    };
                }
            }
        }
        let mi_zx = mutual_information(&j.joint_zx());
        let h_z = -pz
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.log2())
            .sum::<f64>();
        Self {
            n_r,
            n_z,
            n_x,
            pzx,
            pz_gx,
            px_gz,
            pr_gzx,
            mi_zx,
            h_z,
        }
    }

    pub fn pr_gzx(&self, r: usize, z: usize, x: usize) -> f64 {
        self.pr_gzx[(r * self.n_z + z) * self.n_x + x]
    }
}

/// Average distortion of releasing `a` at `(z, x)`:
/// `sum_r p(r | z, x) d(a, r)`, laid out like a channel.
pub(crate) fn mean_distortion_table(stats: &JointStats, d: &DistortionMatrix) -> Vec<f64> {
    let n_a = d.n_symbols();
    let mut out = vec![0.0; n_a * stats.n_z * stats.n_x];
    for z in 0..stats.n_z {
        for x in 0..stats.n_x {
            for a in 0..n_a {
                let mut acc = 0.0;
                for r in 0..stats.n_r {
                    acc += stats.pr_gzx(r, z, x) * d.get(a, r);
                }
                out[(z * stats.n_x + x) * n_a + a] = acc;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

fn dirichlet_slice(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut sum = 0.0;
    for v in out.iter_mut() {
        // Exp(1) samples normalized to the simplex: flat Dirichlet.
        let u: f64 = rng.random();
        *v = -(1.0 - u).ln();
        sum += *v;
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

fn floor_slices(entries: &mut [f64], slice_len: usize) {
    for slice in entries.chunks_mut(slice_len) {
        let mut sum = 0.0;
        for v in slice.iter_mut() {
            if *v < INIT_FLOOR {
                *v = INIT_FLOOR;
            }
            sum += *v;
        }
        for v in slice.iter_mut() {
            *v /= sum;
        }
    }
}

pub(crate) fn init_aux(
    stats: &JointStats,
    n_a: usize,
    mode: InitMode,
    seed: u64,
    with_q4: bool,
) -> AuxDists {
    let (n_r, n_z, n_x) = (stats.n_r, stats.n_z, stats.n_x);
    let mut q1 = vec![1.0 / n_a as f64; n_a];
    let mut q2 = vec![1.0 / n_z as f64; n_a * n_x * n_z];
    let mut q3 = vec![1.0 / n_a as f64; n_z * n_a];
    let mut q4 = if with_q4 {
        Some(vec![1.0 / n_r as f64; n_a * n_r])
    } else {
        None
    };
    if mode == InitMode::RandomDirichlet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        dirichlet_slice(&mut rng, &mut q1);
        for s in q2.chunks_mut(n_z) {
            dirichlet_slice(&mut rng, s);
        }
        for s in q3.chunks_mut(n_a) {
            dirichlet_slice(&mut rng, s);
        }
        if let Some(q4) = q4.as_mut() {
            for s in q4.chunks_mut(n_r) {
                dirichlet_slice(&mut rng, s);
            }
        }
    }
    floor_slices(&mut q1, n_a);
    floor_slices(&mut q2, n_z);
    floor_slices(&mut q3, n_a);
    if let Some(q4) = q4.as_mut() {
        floor_slices(q4, n_r);
    }
    AuxDists {
        n_a,
        n_r,
        n_z,
        n_x,
        q1,
        q2,
        q3,
        q4,
    }
}

// ---------------------------------------------------------------------------
// Core sweep
// ---------------------------------------------------------------------------

/// One channel update: for each `(z, x)` slice set
/// `p(a|z,x) = (1/eta) [q1^mu1 q2^mu1 q3^mu2 2^(-e(a,z,x))]^(1/(mu1+mu2))`
/// where `e` is the exponent table (mean distortion, or the KL divergence to
/// `q4` in the mutual-information variant).
pub(crate) fn update_channel(
    stats: &JointStats,
    aux: &AuxDists,
    exponent: &[f64],
    mu: LagrangePair,
    out: &mut Channel,
) -> Result<()> {
    let n_a = aux.n_a;
    let inv = 1.0 / mu.sum();
    let mut logw = vec![0.0; n_a];
    for z in 0..stats.n_z {
        for x in 0..stats.n_x {
            if stats.pzx[z * stats.n_x + x] <= 0.0 {
                // Zero-mass cell: its slice never contributes to the
                // objective. Fill uniformly per the conditioning convention.
                out.slice_mut(z, x).fill(1.0 / n_a as f64);
                continue;
            }
            for (a, lw) in logw.iter_mut().enumerate() {
                let mut acc = -exponent[(z * stats.n_x + x) * n_a + a];
                // Skip zero-weight factors entirely: 0 * log(0) = 0 here.
                if mu.mu1 > 0.0 {
                    acc += mu.mu1 * (aux.q1(a).log2() + aux.q2(z, a, x).log2());
                }
                if mu.mu2 > 0.0 {
                    acc += mu.mu2 * aux.q3(a, z).log2();
                }
                *lw = acc * inv;
            }
            let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(Error::NumericUnderflow(format!(
                    "all release weights vanished in slice (z={z},x={x})"
                )));
            }
            let slice = out.slice_mut(z, x);
            let mut sum = 0.0;
            for a in 0..n_a {
                let w = (logw[a] - m).exp2();
                slice[a] = w;
                sum += w;
            }
            for v in slice.iter_mut() {
                *v /= sum;
            }
        }
    }
    clamp_and_renormalize(out.entries_mut(), n_a);
    Ok(())
}

/// Refresh the auxiliaries from the channel (the closed-form minimizers).
pub(crate) fn refresh_aux(stats: &JointStats, j: &Joint3, ch: &Channel, aux: &mut AuxDists) {
    let n_a = aux.n_a;
    let (n_r, n_z, n_x) = (stats.n_r, stats.n_z, stats.n_x);
    // q1(a) = sum_{z,x} p(a|z,x) p(z,x)
    for a in 0..n_a {
        let mut acc = 0.0;
        for z in 0..n_z {
            for x in 0..n_x {
                acc += ch.get(a, z, x) * stats.pzx[z * n_x + x];
            }
        }
        aux.q1[a] = acc;
    }
    // q2(z|a,x) = p(a|z,x) p(z|x) / sum_z' p(a|z',x) p(z'|x)
    for a in 0..n_a {
        for x in 0..n_x {
            let mut den = 0.0;
            for z in 0..n_z {
                den += ch.get(a, z, x) * stats.pz_gx[z * n_x + x];
            }
            for z in 0..n_z {
                aux.q2[(a * n_x + x) * n_z + z] = if den > 0.0 {
                    ch.get(a, z, x) * stats.pz_gx[z * n_x + x] / den
                } else {
                    1.0 / n_z as f64
                };
            }
        }
    }
    // q3(a|z) = sum_x p(a|z,x) p(x|z)
    for z in 0..n_z {
        for a in 0..n_a {
            let mut acc = 0.0;
            for x in 0..n_x {
                acc += ch.get(a, z, x) * stats.px_gz[z * n_x + x];
            }
            aux.q3[z * n_a + a] = acc;
        }
    }
    // q4(r|a) = sum_{z,x} p(a|z,x) p(r,z,x) / sum_{z,x} p(a|z,x) p(z,x)
    if let Some(q4) = aux.q4.as_mut() {
        for a in 0..n_a {
            let mut den = 0.0;
            for z in 0..n_z {
                for x in 0..n_x {
                    den += ch.get(a, z, x) * stats.pzx[z * n_x + x];
                }
            }
            for r in 0..n_r {
                let mut num = 0.0;
                for z in 0..n_z {
                    for x in 0..n_x {
                        num += ch.get(a, z, x) * j.get(r, z, x);
                    }
                }
                q4[a * n_r + r] = if den > 0.0 {
                    num / den
                } else {
                    1.0 / n_r as f64
                };
            }
        }
    }
}

/// Achieved metrics for a distortion-problem channel.
pub(crate) fn achieved_distortion(
    ch: &Channel,
    j: &Joint3,
    d: &DistortionMatrix,
) -> Result<AchievedMetrics> {
    Ok(AchievedMetrics {
        utility: crate::prob::expected_distortion(ch, j, d)?,
        eps_leak: leakage_individual(ch, j)?,
        delta_leak: leakage_collusion(ch, j)?,
    })
}

/// Achieved metrics for a mutual-information-problem channel.
pub(crate) fn achieved_mi(ch: &Channel, j: &Joint3) -> Result<AchievedMetrics> {
    Ok(AchievedMetrics {
        utility: crate::prob::utility_mi(ch, j)?,
        eps_leak: leakage_individual(ch, j)?,
        delta_leak: leakage_collusion(ch, j)?,
    })
}
