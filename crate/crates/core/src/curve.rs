//! Trade-off surface tracing: sweep a multiplier grid, densify sparse
//! regions by time-sharing, export the result.
//!
//! Every grid point is one dual solve at fixed `(mu1, mu2)`, yielding a
//! `(utility, eps_leak, delta_leak)` triple. For the distortion problem these
//! triples lie on the optimal surface; for the mutual-information problem
//! they bound it from below, and convex combinations of channels
//! (time-sharing) fill visible gaps.

use crate::ba::distortion::ba_distortion_run;
use crate::ba::mutual_info::{ba_mi_run, MiOptions};
use crate::ba::{AchievedMetrics, BaOptions, LagrangePair};
use crate::error::{Error, Result};
use crate::exec::{run_indexed, ExecMode};
use crate::prob::{
    expected_distortion, leakage_collusion, leakage_individual, utility_mi, Channel,
    DistortionMatrix, Joint3,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Tolerance absorbing solver noise in dominance comparisons.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// Histogram resolution used to bias time-sharing samples away from densely
/// populated regions of the `(eps, delta)` plane.
const DENSITY_BINS: usize = 20;

// ---------------------------------------------------------------------------
// Problem
// ---------------------------------------------------------------------------

/// Which utility the release optimizes.
#[derive(Clone, Debug)]
pub enum Problem {
    /// Minimize expected distortion under the given cost matrix.
    Distortion(DistortionMatrix),
    /// Maximize mutual information with the requested value, over a release
    /// alphabet of the given size.
    MutualInfo { n_symbols: usize },
}

impl Problem {
    pub fn n_symbols(&self) -> usize {
        match self {
            Problem::Distortion(d) => d.n_symbols(),
            Problem::MutualInfo { n_symbols } => *n_symbols,
        }
    }

    /// True when larger utility values are better (mutual information).
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Problem::MutualInfo { .. })
    }

    /// Utility and leakage of a channel under this problem.
    pub fn achieved(&self, ch: &Channel, j: &Joint3) -> Result<AchievedMetrics> {
        let utility = match self {
            Problem::Distortion(d) => expected_distortion(ch, j, d)?,
            Problem::MutualInfo { .. } => utility_mi(ch, j)?,
        };
        Ok(AchievedMetrics {
            utility,
            eps_leak: leakage_individual(ch, j)?,
            delta_leak: leakage_collusion(ch, j)?,
        })
    }

    /// Is utility `a` strictly better than `b` here?
    pub fn better(&self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Linear,
}

/// A grid of multiplier pairs, the Cartesian product of two axes.
#[derive(Clone, Debug)]
pub struct MultiplierGrid {
    mu1_values: Vec<f64>,
    mu2_values: Vec<f64>,
}

impl MultiplierGrid {
    pub fn new(mu1_values: Vec<f64>, mu2_values: Vec<f64>) -> Result<Self> {
        for (name, vs) in [("mu1", &mu1_values), ("mu2", &mu2_values)] {
            if vs.is_empty() {
                return Err(Error::InvalidInput(format!("{name} axis is empty")));
            }
            for w in vs.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::InvalidInput(format!(
                        "{name} axis must be strictly increasing"
                    )));
                }
            }
            if vs.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} axis must be finite and non-negative"
                )));
            }
        }
        Ok(Self {
            mu1_values,
            mu2_values,
        })
    }

    pub fn spaced(count: usize, min: f64, max: f64, spacing: Spacing) -> Result<Self> {
        let axis = spaced_axis(count, min, max, spacing)?;
        Self::new(axis.clone(), axis)
    }

    /// 15 log-spaced values per axis on `[1e-3, 10]`.
    pub fn default_grid() -> Self {
        Self::spaced(15, 1e-3, 10.0, Spacing::Log).expect("default grid is valid")
    }

    pub fn mu1_values(&self) -> &[f64] {
        &self.mu1_values
    }

    pub fn mu2_values(&self) -> &[f64] {
        &self.mu2_values
    }

    /// All pairs, mu1-major.
    pub fn pairs(&self) -> Vec<LagrangePair> {
        let mut out = Vec::with_capacity(self.mu1_values.len() * self.mu2_values.len());
        for &mu1 in &self.mu1_values {
            for &mu2 in &self.mu2_values {
                out.push(LagrangePair { mu1, mu2 });
            }
        }
        out
    }
}

pub fn spaced_axis(count: usize, min: f64, max: f64, spacing: Spacing) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("axis count must be >= 1".into()));
    }
    if !(min < max) && count > 1 {
        return Err(Error::InvalidInput(format!(
            "axis range [{min}, {max}] must be increasing"
        )));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let n = count as f64 - 1.0;
    let axis = (0..count)
        .map(|i| {
            let t = i as f64 / n;
            match spacing {
                Spacing::Linear => min + t * (max - min),
                Spacing::Log => {
                    if !(min > 0.0) {
                        f64::NAN
                    } else {
                        (min.ln() + t * (max.ln() - min.ln())).exp()
                    }
                }
            }
        })
        .collect::<Vec<_>>();
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "log spacing requires a positive lower bound".into(),
        ));
    }
    Ok(axis)
}

// ---------------------------------------------------------------------------
// Curve points
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Grid,
    Timeshare,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Grid => "grid",
            Provenance::Timeshare => "timeshare",
        }
    }
}

/// One operating point of the trade-off surface.
#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub mu: LagrangePair,
    /// Expected distortion (lower better) or mutual information in bits
    /// (higher better).
    pub utility: f64,
    pub eps_leak: f64,
    pub delta_leak: f64,
    pub iterations: usize,
    pub channel: Channel,
    pub provenance: Provenance,
}

/// A grid point whose solve failed; the sweep continues past these.
#[derive(Clone, Debug)]
pub struct SweepFailure {
    pub mu: LagrangePair,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub points: Vec<CurvePoint>,
    pub failures: Vec<SweepFailure>,
}

/// Options shared by sweeps and budget solves.
#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub ba: BaOptions,
    /// Random initializations per mutual-information solve.
    pub n_init: usize,
    /// Base seed for mutual-information initialization streams.
    pub mi_seed: u64,
    pub exec: ExecMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ba: BaOptions::default(),
            n_init: 10,
            mi_seed: 0,
            exec: ExecMode::default(),
        }
    }
}

impl SweepOptions {
    pub(crate) fn mi_options(&self, rng_seed: u64) -> MiOptions {
        MiOptions {
            base: self.ba,
            n_init: self.n_init,
            rng_seed,
            exec: self.exec,
        }
    }
}

/// Dual solve at every grid pair. Points come back mu1-major; failures are
/// recorded and skipped rather than aborting the sweep.
pub fn sweep(
    j: &Joint3,
    problem: &Problem,
    grid: &MultiplierGrid,
    opts: &SweepOptions,
) -> Result<SweepOutcome> {
    opts.ba.validate()?;
    let pairs = grid.pairs();
    // Per-point seeds drawn up front keep parallel sweeps reproducible.
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.mi_seed);
    let seeds: Vec<u64> = (0..pairs.len()).map(|_| seeder.random()).collect();

    let runs = run_indexed(pairs.len(), opts.exec, |i| {
        let mu = pairs[i];
        match problem {
            Problem::Distortion(d) => ba_distortion_run(j, d, mu, &opts.ba).map(|r| CurvePoint {
                mu,
                utility: r.achieved.utility,
                eps_leak: r.achieved.eps_leak,
                delta_leak: r.achieved.delta_leak,
                iterations: r.iterations,
                channel: r.channel,
                provenance: Provenance::Grid,
            }),
            Problem::MutualInfo { n_symbols } => {
                // Inner multi-start runs sequentially; the sweep is the outer
                // parallel loop.
                let mi = MiOptions {
                    exec: ExecMode::Sequential,
                    ..opts.mi_options(seeds[i])
                };
                ba_mi_run(j, *n_symbols, mu, &mi).map(|out| CurvePoint {
                    mu,
                    utility: out.result.achieved.utility,
                    eps_leak: out.result.achieved.eps_leak,
                    delta_leak: out.result.achieved.delta_leak,
                    iterations: out.result.iterations,
                    channel: out.result.channel,
                    provenance: Provenance::Grid,
                })
            }
        }
    });

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(p) => points.push(p),
            Err(e) => failures.push(SweepFailure {
                mu: pairs[i],
                message: e.to_string(),
            }),
        }
    }
    Ok(SweepOutcome { points, failures })
}

// ---------------------------------------------------------------------------
// Dominance
// ---------------------------------------------------------------------------

/// `a` strictly dominates `b`: no worse on either leakage or utility, and
/// better than tolerance on at least one coordinate.
pub fn strictly_dominates(
    a: &CurvePoint,
    b: &CurvePoint,
    higher_is_better: bool,
    tol: f64,
) -> bool {
    let (ua, ub) = if higher_is_better {
        (a.utility, b.utility)
    } else {
        (-a.utility, -b.utility)
    };
    let no_worse =
        a.eps_leak <= b.eps_leak + tol && a.delta_leak <= b.delta_leak + tol && ua >= ub - tol;
    let strictly_better = a.eps_leak < b.eps_leak - tol
        || a.delta_leak < b.delta_leak - tol
        || ua > ub + tol;
    no_worse && strictly_better
}

/// `a` weakly covers `b`: at least as good everywhere within tolerance.
/// Covers exact duplicates, unlike strict dominance.
pub fn weakly_covers(a: &CurvePoint, b: &CurvePoint, higher_is_better: bool, tol: f64) -> bool {
    let (ua, ub) = if higher_is_better {
        (a.utility, b.utility)
    } else {
        (-a.utility, -b.utility)
    };
    a.eps_leak <= b.eps_leak + tol && a.delta_leak <= b.delta_leak + tol && ua >= ub - tol
}

// ---------------------------------------------------------------------------
// Time-sharing densification
// ---------------------------------------------------------------------------

/// Densify a mutual-information surface by random convex combinations of
/// three existing channels.
///
/// Sampling is biased away from densely populated regions of the
/// `(eps, delta)` plane via inverse-density weights on a 20x20 histogram. A
/// candidate is kept only if no current point already covers it; the final
/// set is pruned to its dominance envelope.
pub fn timeshare_densify(
    j: &Joint3,
    problem: &Problem,
    points: &[CurvePoint],
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<CurvePoint>> {
    if !problem.higher_is_better() {
        return Err(Error::InvalidInput(
            "time-sharing densification applies to the mutual-information surface".into(),
        ));
    }
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let mut env: Vec<CurvePoint> = points.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    for _ in 0..n_samples {
        let weights = inverse_density_weights(&env);
        let idx = sample_distinct_3(&mut rng, &weights);
        let lambda = dirichlet3(&mut rng);
        let parents = [&env[idx[0]], &env[idx[1]], &env[idx[2]]];
        let channel = Channel::mix(&[
            (lambda[0], &parents[0].channel),
            (lambda[1], &parents[1].channel),
            (lambda[2], &parents[2].channel),
        ])?;
        let achieved = problem.achieved(&channel, j)?;
        let candidate = CurvePoint {
            mu: LagrangePair {
                mu1: lambda[0] * parents[0].mu.mu1
                    + lambda[1] * parents[1].mu.mu1
                    + lambda[2] * parents[2].mu.mu1,
                mu2: lambda[0] * parents[0].mu.mu2
                    + lambda[1] * parents[1].mu.mu2
                    + lambda[2] * parents[2].mu.mu2,
            },
            utility: achieved.utility,
            eps_leak: achieved.eps_leak,
            delta_leak: achieved.delta_leak,
            iterations: 0,
            channel,
            provenance: Provenance::Timeshare,
        };
        let covered = env
            .iter()
            .any(|p| weakly_covers(p, &candidate, true, DOMINANCE_TOL));
        if !covered {
            env.push(candidate);
        }
    }

    // Keep only the envelope.
    let keep: Vec<bool> = env
        .iter()
        .map(|p| {
            !env.iter()
                .any(|q| strictly_dominates(q, p, true, DOMINANCE_TOL))
        })
        .collect();
    Ok(env
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect())
}

fn inverse_density_weights(points: &[CurvePoint]) -> Vec<f64> {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = (lo.0.min(p.eps_leak), lo.1.min(p.delta_leak));
        hi = (hi.0.max(p.eps_leak), hi.1.max(p.delta_leak));
    }
    let span = ((hi.0 - lo.0).max(1e-12), (hi.1 - lo.1).max(1e-12));
    let bin = |p: &CurvePoint| {
        let bx = (((p.eps_leak - lo.0) / span.0 * DENSITY_BINS as f64) as usize)
            .min(DENSITY_BINS - 1);
        let by = (((p.delta_leak - lo.1) / span.1 * DENSITY_BINS as f64) as usize)
            .min(DENSITY_BINS - 1);
        bx * DENSITY_BINS + by
    };
    let mut counts = vec![0usize; DENSITY_BINS * DENSITY_BINS];
    for p in points {
        counts[bin(p)] += 1;
    }
    points.iter().map(|p| 1.0 / counts[bin(p)] as f64).collect()
}

fn sample_distinct_3(rng: &mut ChaCha8Rng, weights: &[f64]) -> [usize; 3] {
    let mut w = weights.to_vec();
    let mut out = [0usize; 3];
    for slot in &mut out {
        let total: f64 = w.iter().sum();
        let mut t = rng.random::<f64>() * total;
        let mut pick = w.len() - 1;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            t -= wi;
            if t <= 0.0 {
                pick = i;
                break;
            }
        }
        *slot = pick;
        w[pick] = 0.0;
    }
    out
}

fn dirichlet3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut v = [0.0; 3];
    let mut sum = 0.0;
    for x in &mut v {
        let u: f64 = rng.random();
        *x = -(1.0 - u).ln();
        sum += *x;
    }
    for x in &mut v {
        *x /= sum;
    }
    v
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Write curve points as CSV: header
/// `mu1,mu2,utility,eps_leak,delta_leak,iterations,provenance`, rows sorted
/// by `(mu1, mu2)`, floats in shortest round-trip decimal form.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], w: &mut W) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no curve points to export".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .mu
            .mu1
            .total_cmp(&points[b].mu.mu1)
            .then(points[a].mu.mu2.total_cmp(&points[b].mu.mu2))
    });
    writeln!(w, "mu1,mu2,utility,eps_leak,delta_leak,iterations,provenance")?;
    for i in order {
        let p = &points[i];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.mu.mu1,
            p.mu.mu2,
            p.utility,
            p.eps_leak,
            p.delta_leak,
            p.iterations,
            p.provenance.as_str()
        )?;
    }
    Ok(())
}

/// Write curve points to a file (UTF-8, LF line endings).
pub fn export_curve(points: &[CurvePoint], destination: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_curve_csv(points, &mut buf)?;
    std::fs::write(destination, buf)?;
    Ok(())
}
