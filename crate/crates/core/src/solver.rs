//! Map a leakage budget `(eps, delta)` to a concrete release channel.
//!
//! The primary route is nested bisection over the Lagrange multipliers: the
//! outer level moves `mu2` until the collusion leakage meets `delta`, the
//! inner level moves `mu1` until the individual leakage meets `eps`. Each
//! level assumes the leakage responds monotonically (non-increasing) to its
//! own multiplier; that assumption is checked at run time and a grid-sweep
//! plus time-sharing fallback takes over on violation.
//!
//! Every channel evaluated on the way — plus a few closed-form candidates
//! (the unconstrained optimum, constant releases, releases that depend on
//! prior releases only) — lands in a common pool; the report returns the
//! best-utility feasible pool entry. The closed-form candidates matter when a
//! budget sits exactly on the collusion floor `I(Z;X)`, where the dual
//! multiplier diverges and bisection alone cannot land.

use crate::ba::distortion::{ba_distortion_run, min_distortion_channel};
use crate::ba::mutual_info::ba_mi_run;
use crate::ba::{AchievedMetrics, LagrangePair};
use crate::curve::{sweep, CurvePoint, MultiplierGrid, Problem, SweepOptions};
use crate::error::{Error, Result};
use crate::prob::{mutual_information, Channel, Joint3};

/// Feasibility slack on reported budgets, in bits.
pub const FEASIBILITY_TOL_BITS: f64 = 1e-6;
/// Bisection stops once the feasible side is within this many bits of the
/// budget (or the bracket is exhausted).
pub const BISECT_TOL_BITS: f64 = 1e-4;
/// Halvings per bisection level.
pub const BISECT_MAX_HALVINGS: usize = 60;
/// Upper end of the multiplier bracket.
pub const MU_MAX: f64 = 1024.0;
/// Deterministic prior-releases-only channels are enumerated up to this count.
const MAX_Z_ONLY_ENUM: usize = 1024;

// ---------------------------------------------------------------------------
// Budget
// ---------------------------------------------------------------------------

/// A per-request leakage budget, in bits. Invariant: `0 <= eps <= delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    eps: f64,
    delta: f64,
}

impl Budget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !eps.is_finite() || !delta.is_finite() || eps < 0.0 || delta < 0.0 {
            return Err(Error::InfeasibleBudget(format!(
                "budgets must be finite and non-negative, got ({eps}, {delta})"
            )));
        }
        if eps > delta {
            return Err(Error::InfeasibleBudget(format!(
                "individual budget eps = {eps} exceeds collusion budget delta = {delta}"
            )));
        }
        Ok(Self { eps, delta })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePath {
    Bisection,
    Timeshare,
}

/// Outcome of a budget solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub channel: Channel,
    pub achieved: AchievedMetrics,
    /// Multiplier pair of the winning bisection candidate; `None` for
    /// closed-form or time-shared winners.
    pub mu: Option<LagrangePair>,
    /// Convex-combination weights over the supplied points, for time-shared
    /// solutions.
    pub lambdas: Option<Vec<f64>>,
    pub path: SolvePath,
    /// Both budget constraints hold for `achieved`.
    pub feasible: bool,
    /// True for the mutual-information problem, whose solves are only
    /// locally optimal.
    pub best_effort: bool,
}

// ---------------------------------------------------------------------------
// Candidate pool
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct Candidate {
    channel: Channel,
    achieved: AchievedMetrics,
    mu: Option<LagrangePair>,
    lambdas: Option<Vec<f64>>,
    path: SolvePath,
}

struct Pool<'a> {
    problem: &'a Problem,
    budget: Budget,
    entries: Vec<Candidate>,
}

impl<'a> Pool<'a> {
    fn new(problem: &'a Problem, budget: Budget) -> Self {
        Self {
            problem,
            budget,
            entries: Vec::new(),
        }
    }

    fn push(&mut self, c: Candidate) {
        self.entries.push(c);
    }

    fn feasible(&self, a: &AchievedMetrics) -> bool {
        a.eps_leak <= self.budget.eps && a.delta_leak <= self.budget.delta
    }

    /// Best feasible candidate by utility, or the least-violating one.
    fn select(&self) -> Option<(Candidate, bool)> {
        let mut best_feasible: Option<&Candidate> = None;
        for c in &self.entries {
            if self.feasible(&c.achieved) {
                let better = match best_feasible {
                    None => true,
                    Some(b) => self.problem.better(c.achieved.utility, b.achieved.utility),
                };
                if better {
                    best_feasible = Some(c);
                }
            }
        }
        if let Some(c) = best_feasible {
            return Some((c.clone(), true));
        }
        // Nothing feasible: minimize total violation, then utility.
        let violation = |a: &AchievedMetrics| {
            (a.eps_leak - self.budget.eps).max(0.0) + (a.delta_leak - self.budget.delta).max(0.0)
        };
        let mut best: Option<&Candidate> = None;
        for c in &self.entries {
            let better = match best {
                None => true,
                Some(b) => {
                    let (vc, vb) = (violation(&c.achieved), violation(&b.achieved));
                    vc < vb - 1e-12
                        || ((vc - vb).abs() <= 1e-12
                            && self.problem.better(c.achieved.utility, b.achieved.utility))
                }
            };
            if better {
                best = Some(c);
            }
        }
        best.map(|c| (c.clone(), false))
    }
}

// ---------------------------------------------------------------------------
// Dual solves and closed-form candidates
// ---------------------------------------------------------------------------

fn solve_at(
    j: &Joint3,
    problem: &Problem,
    mu: LagrangePair,
    opts: &SweepOptions,
) -> Result<(Channel, AchievedMetrics)> {
    match problem {
        Problem::Distortion(d) => {
            let r = ba_distortion_run(j, d, mu, &opts.ba)?;
            Ok((r.channel, r.achieved))
        }
        Problem::MutualInfo { n_symbols } => {
            let out = ba_mi_run(j, *n_symbols, mu, &opts.mi_options(opts.mi_seed))?;
            Ok((out.result.channel, out.result.achieved))
        }
    }
}

/// The unconstrained utility optimum, when available in closed form.
fn unconstrained_candidate(j: &Joint3, problem: &Problem) -> Result<Option<Candidate>> {
    let channel = match problem {
        Problem::Distortion(d) => min_distortion_channel(j, d),
        Problem::MutualInfo { n_symbols } => {
            let cells = j.n_z() * j.n_x();
            if (*n_symbols as f64).powi(cells as i32) > MAX_Z_ONLY_ENUM as f64 {
                return Ok(None);
            }
            // Mutual information is convex in the channel, so its maximum
            // over the channel polytope sits at a deterministic vertex.
            let mut best: Option<(Channel, f64)> = None;
            let mut assignment = vec![0usize; cells];
            'outer: loop {
                let ch = Channel::deterministic(*n_symbols, j.n_z(), j.n_x(), |z, x| {
                    assignment[z * j.n_x() + x]
                });
                let u = crate::prob::utility_mi(&ch, j)?;
                if best.as_ref().map_or(true, |(_, b)| u > *b) {
                    best = Some((ch, u));
                }
                let mut k = 0;
                loop {
                    if k == cells {
                        break 'outer;
                    }
                    assignment[k] += 1;
                    if assignment[k] < *n_symbols {
                        break;
                    }
                    assignment[k] = 0;
                    k += 1;
                }
            }
            best.expect("nonempty enumeration").0
        }
    };
    let achieved = problem.achieved(&channel, j)?;
    Ok(Some(Candidate {
        channel,
        achieved,
        mu: match problem {
            Problem::Distortion(_) => Some(LagrangePair { mu1: 0.0, mu2: 0.0 }),
            Problem::MutualInfo { .. } => None,
        },
        lambdas: None,
        path: SolvePath::Bisection,
    }))
}

/// Constant releases: zero individual leakage, collusion leakage at the floor.
fn constant_candidates(j: &Joint3, problem: &Problem, pool: &mut Pool) -> Result<()> {
    for a in 0..problem.n_symbols() {
        let channel = Channel::constant(a, problem.n_symbols(), j.n_z(), j.n_x());
        let achieved = problem.achieved(&channel, j)?;
        pool.push(Candidate {
            channel,
            achieved,
            mu: None,
            lambdas: None,
            path: SolvePath::Bisection,
        });
    }
    Ok(())
}

/// Deterministic functions of the prior releases only. These add nothing to
/// what colluders already know, so their collusion leakage equals the floor
/// `I(Z;X)` exactly; they are the reachable optima when the collusion budget
/// sits on that floor.
fn z_only_candidates(j: &Joint3, problem: &Problem, pool: &mut Pool) -> Result<()> {
    let n_a = problem.n_symbols();
    let n_z = j.n_z();
    if (n_a as f64).powi(n_z as i32) > MAX_Z_ONLY_ENUM as f64 {
        return Ok(());
    }
    let mut assignment = vec![0usize; n_z];
    loop {
        let channel = Channel::deterministic(n_a, n_z, j.n_x(), |z, _x| assignment[z]);
        let achieved = problem.achieved(&channel, j)?;
        pool.push(Candidate {
            channel,
            achieved,
            mu: None,
            lambdas: None,
            path: SolvePath::Bisection,
        });
        let mut k = 0;
        loop {
            if k == n_z {
                return Ok(());
            }
            assignment[k] += 1;
            if assignment[k] < n_a {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Nested bisection
// ---------------------------------------------------------------------------

/// Non-increasing check over evaluated (multiplier, leakage) pairs.
fn monotone_ok(evals: &mut Vec<(f64, f64)>) -> bool {
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    evals.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9)
}

struct BisectionOutcome {
    /// Channel of the smallest eps-feasible mu1 found at this mu2, if any.
    feasible: Option<(LagrangePair, Channel, AchievedMetrics)>,
    monotone: bool,
}

/// Inner loop: smallest `mu1` whose individual leakage meets the budget, at
/// fixed `mu2`. All evaluations are pushed into the pool.
fn inner_bisect(
    j: &Joint3,
    problem: &Problem,
    budget: Budget,
    mu2: f64,
    opts: &SweepOptions,
    pool: &mut Pool,
) -> Result<BisectionOutcome> {
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut best: Option<(LagrangePair, Channel, AchievedMetrics)> = None;

    let eval = |mu1: f64,
                    pool: &mut Pool,
                    best: &mut Option<(LagrangePair, Channel, AchievedMetrics)>,
                    evals: &mut Vec<(f64, f64)>|
     -> Result<bool> {
        let mu = LagrangePair { mu1, mu2 };
        let (channel, achieved) = solve_at(j, problem, mu, opts)?;
        evals.push((mu1, achieved.eps_leak));
        let ok = achieved.eps_leak <= budget.eps;
        pool.push(Candidate {
            channel: channel.clone(),
            achieved,
            mu: Some(mu),
            lambdas: None,
            path: SolvePath::Bisection,
        });
        if ok {
            let replace = match best {
                None => true,
                Some((b, _, _)) => mu1 < b.mu1,
            };
            if replace {
                *best = Some((mu, channel, achieved));
            }
        }
        Ok(ok)
    };

    // mu1 = 0 first: if already feasible the constraint is inactive.
    let lo_ok = eval(0.0, pool, &mut best, &mut evals)?;
    if !lo_ok {
        let mut lo = 0.0;
        let mut hi = MU_MAX;
        let mut hi_checked = false;
        for _ in 0..BISECT_MAX_HALVINGS {
            let mid = 0.5 * (lo + hi);
            if eval(mid, pool, &mut best, &mut evals)? {
                hi = mid;
                hi_checked = true;
            } else {
                lo = mid;
            }
            if let Some((_, _, a)) = &best {
                if budget.eps - a.eps_leak <= BISECT_TOL_BITS && (hi - lo) <= 1e-9 * MU_MAX {
                    break;
                }
            }
        }
        // The upper endpoint is trusted to be feasible by monotonicity and
        // only evaluated when no midpoint ever was.
        if !hi_checked {
            eval(MU_MAX, pool, &mut best, &mut evals)?;
        }
    }
    Ok(BisectionOutcome {
        feasible: best,
        monotone: monotone_ok(&mut evals),
    })
}

/// Outer loop: smallest `mu2` whose inner solution also meets the collusion
/// budget.
fn nested_bisection(
    j: &Joint3,
    problem: &Problem,
    budget: Budget,
    opts: &SweepOptions,
    pool: &mut Pool,
) -> Result<bool> {
    let mut monotone = true;
    let mut outer_evals: Vec<(f64, f64)> = Vec::new();

    let eval = |mu2: f64, pool: &mut Pool, monotone: &mut bool| -> Result<Option<f64>> {
        let out = inner_bisect(j, problem, budget, mu2, opts, pool)?;
        *monotone &= out.monotone;
        Ok(out.feasible.map(|(_, _, a)| a.delta_leak))
    };

    // mu2 = 0 first: if the inner solution already meets delta, done.
    match eval(0.0, pool, &mut monotone)? {
        Some(delta) => {
            outer_evals.push((0.0, delta));
            if delta <= budget.delta {
                monotone &= monotone_ok(&mut outer_evals);
                return Ok(monotone);
            }
        }
        None => {}
    }

    let mut lo = 0.0;
    let mut hi = MU_MAX;
    let mut best_slack = f64::INFINITY;
    let mut hi_checked = false;
    for _ in 0..BISECT_MAX_HALVINGS {
        let mid = 0.5 * (lo + hi);
        match eval(mid, pool, &mut monotone)? {
            Some(delta) => {
                outer_evals.push((mid, delta));
                if delta <= budget.delta {
                    hi = mid;
                    hi_checked = true;
                    best_slack = budget.delta - delta;
                } else {
                    lo = mid;
                }
            }
            None => {
                // eps unreachable at this mu2; larger mu2 suppresses both
                // leakages, so move up.
                lo = mid;
            }
        }
        if best_slack <= BISECT_TOL_BITS && (hi - lo) <= 1e-9 * MU_MAX {
            break;
        }
    }
    if !hi_checked {
        if let Some(delta) = eval(MU_MAX, pool, &mut monotone)? {
            outer_evals.push((MU_MAX, delta));
        }
    }
    monotone &= monotone_ok(&mut outer_evals);
    Ok(monotone)
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// Solve for the best release channel meeting a leakage budget.
///
/// For the distortion problem the result is globally optimal up to bisection
/// tolerance. For the mutual-information problem the report is best-effort
/// (locally optimal solves). When even the uninformative release cannot meet
/// the collusion budget (the budget lies below the floor `I(Z;X)` already
/// leaked by prior releases), the least-violating channel is returned with
/// `feasible = false`.
pub fn solve_for_budget(
    j: &Joint3,
    problem: &Problem,
    budget: Budget,
    opts: &SweepOptions,
) -> Result<SolveReport> {
    opts.ba.validate()?;
    let floor = mutual_information(&j.joint_zx());
    let mut pool = Pool::new(problem, budget);

    // Unconstrained optimum: return immediately when it fits the budget.
    if let Some(c) = unconstrained_candidate(j, problem)? {
        if pool.feasible(&c.achieved) {
            return Ok(report_from(c, true, problem));
        }
        pool.push(c);
    }

    constant_candidates(j, problem, &mut pool)?;
    z_only_candidates(j, problem, &mut pool)?;

    // Bisection only helps when the collusion budget sits meaningfully above
    // the floor; at the floor the optimal multiplier diverges and the
    // closed-form candidates above are the reachable optima.
    let mut monotone = true;
    if budget.delta - floor > FEASIBILITY_TOL_BITS {
        monotone = nested_bisection(j, problem, budget, opts, &mut pool)?;
    }

    if !monotone {
        // Monotonicity assumption failed: grid sweep plus time-sharing.
        let grid = MultiplierGrid::default_grid();
        let swept = sweep(j, problem, &grid, opts)?;
        if swept.points.len() >= 2 {
            if let Ok(report) = timeshare_to_target(
                j,
                problem,
                &swept.points,
                budget,
                BISECT_TOL_BITS,
                32,
            ) {
                pool.push(Candidate {
                    channel: report.channel,
                    achieved: report.achieved,
                    mu: None,
                    lambdas: report.lambdas,
                    path: SolvePath::Timeshare,
                });
            }
        }
    }

    let (winner, feasible) = pool
        .select()
        .ok_or_else(|| Error::InvalidInput("no candidates produced".into()))?;
    Ok(report_from(winner, feasible, problem))
}

fn report_from(c: Candidate, feasible: bool, problem: &Problem) -> SolveReport {
    SolveReport {
        channel: c.channel,
        achieved: c.achieved,
        mu: c.mu,
        lambdas: c.lambdas,
        path: c.path,
        feasible,
        best_effort: problem.higher_is_better(),
    }
}

/// Reach a budget by convex combinations of existing operating points.
///
/// Starting from the best feasible point, repeatedly mixes toward
/// better-utility points, keeping the largest feasible weight each round.
/// Mixture weights over the input points are tracked exactly and reported.
pub fn timeshare_to_target(
    j: &Joint3,
    problem: &Problem,
    points: &[CurvePoint],
    budget: Budget,
    tol: f64,
    max_rounds: usize,
) -> Result<SolveReport> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let feasible_idx: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].eps_leak <= budget.eps && points[i].delta_leak <= budget.delta)
        .collect();

    let mut weights = vec![0.0; points.len()];
    let (mut channel, mut achieved);
    match feasible_idx.iter().copied().max_by(|&a, &b| {
        if problem.better(points[a].utility, points[b].utility) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Less
        }
    }) {
        Some(best) => {
            weights[best] = 1.0;
            channel = points[best].channel.clone();
            achieved = problem.achieved(&channel, j)?;
        }
        None => {
            // No single feasible point: search pairwise mixtures for a
            // feasible bracket.
            match find_feasible_mixture(j, problem, points, budget)? {
                Some((i, k, lam)) => {
                    weights[i] = 1.0 - lam;
                    weights[k] = lam;
                    channel =
                        Channel::mix(&[(1.0 - lam, &points[i].channel), (lam, &points[k].channel)])?;
                    achieved = problem.achieved(&channel, j)?;
                }
                None => {
                    return Err(Error::NoBracket {
                        eps: budget.eps,
                        delta: budget.delta,
                    })
                }
            }
        }
    }

    for _ in 0..max_rounds {
        // Best strictly better-utility target.
        let target = (0..points.len())
            .filter(|&i| problem.better(points[i].utility, achieved.utility))
            .max_by(|&a, &b| {
                if problem.better(points[a].utility, points[b].utility) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Less
                }
            });
        let Some(t) = target else { break };

        // Largest feasible weight toward the target.
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        let mut improved = false;
        let full = Channel::mix(&[(0.0, &channel), (1.0, &points[t].channel)])?;
        let a_full = problem.achieved(&full, j)?;
        if a_full.eps_leak <= budget.eps && a_full.delta_leak <= budget.delta {
            lo = 1.0;
            improved = true;
        } else {
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let mix = Channel::mix(&[(1.0 - mid, &channel), (mid, &points[t].channel)])?;
                let a = problem.achieved(&mix, j)?;
                if a.eps_leak <= budget.eps && a.delta_leak <= budget.delta {
                    lo = mid;
                    improved = true;
                } else {
                    hi = mid;
                }
            }
        }
        if !improved || lo <= 1e-12 {
            break;
        }
        let mix = Channel::mix(&[(1.0 - lo, &channel), (lo, &points[t].channel)])?;
        let a = problem.achieved(&mix, j)?;
        if !problem.better(a.utility, achieved.utility) {
            break;
        }
        for w in weights.iter_mut() {
            *w *= 1.0 - lo;
        }
        weights[t] += lo;
        channel = mix;
        achieved = a;
        // Close enough to the active constraint: stop refining.
        if budget.eps - achieved.eps_leak <= tol || budget.delta - achieved.delta_leak <= tol {
            break;
        }
    }

    Ok(SolveReport {
        channel,
        achieved,
        mu: None,
        lambdas: Some(weights),
        path: SolvePath::Timeshare,
        feasible: true,
        best_effort: problem.higher_is_better(),
    })
}

/// Pairwise 1-D search for a feasible mixture when no input point is
/// feasible. Returns `(i, k, lambda)` mixing `points[i]` toward `points[k]`.
fn find_feasible_mixture(
    j: &Joint3,
    problem: &Problem,
    points: &[CurvePoint],
    budget: Budget,
) -> Result<Option<(usize, usize, f64)>> {
    // Rank points by violation and try the most promising pairs.
    let violation = |p: &CurvePoint| {
        (p.eps_leak - budget.eps).max(0.0) + (p.delta_leak - budget.delta).max(0.0)
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| violation(&points[a]).total_cmp(&violation(&points[b])));
    order.truncate(16);
    for (ai, &i) in order.iter().enumerate() {
        for &k in order.iter().skip(ai + 1) {
            for step in 1..32 {
                let lam = step as f64 / 32.0;
                let mix =
                    Channel::mix(&[(1.0 - lam, &points[i].channel), (lam, &points[k].channel)])?;
                let a = problem.achieved(&mix, j)?;
                if a.eps_leak <= budget.eps && a.delta_leak <= budget.delta {
                    return Ok(Some((i, k, lam)));
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::test_fixtures::demo_joint;
    use crate::prob::DistortionMatrix;

    fn hamming_problem() -> Problem {
        Problem::Distortion(DistortionMatrix::hamming(2))
    }

    #[test]
    fn budget_ordering_is_enforced() {
        assert!(matches!(
            Budget::new(0.5, 0.3),
            Err(Error::InfeasibleBudget(_))
        ));
        assert!(Budget::new(0.3, 0.5).is_ok());
        assert!(Budget::new(-0.1, 0.5).is_err());
    }

    #[test]
    fn loose_budget_returns_unconstrained_optimum() {
        let j = demo_joint();
        let r = solve_for_budget(
            &j,
            &hamming_problem(),
            Budget::new(10.0, 10.0).unwrap(),
            &SweepOptions::default(),
        )
        .unwrap();
        assert!(r.feasible);
        assert!((r.achieved.utility - 0.138).abs() < 1e-9, "{}", r.achieved.utility);
        assert_eq!(r.mu, Some(LagrangePair { mu1: 0.0, mu2: 0.0 }));
    }

    #[test]
    fn zero_budget_returns_best_constant_guess() {
        let j = demo_joint();
        let r = solve_for_budget(
            &j,
            &hamming_problem(),
            Budget::new(0.0, 0.0).unwrap(),
            &SweepOptions::default(),
        )
        .unwrap();
        // The collusion floor I(Z;X)>0 makes delta=0 strictly unattainable;
        // the least-violating channel is the best constant guess.
        assert!(!r.feasible);
        assert!((r.achieved.utility - 0.482).abs() < 1e-9, "{}", r.achieved.utility);
        assert_eq!(r.achieved.eps_leak, 0.0);
    }

    #[test]
    fn tight_budget_is_met_from_the_feasible_side() {
        let j = demo_joint();
        let budget = Budget::new(0.3, 0.35).unwrap();
        let r = solve_for_budget(&j, &hamming_problem(), budget, &SweepOptions::default())
            .unwrap();
        assert!(r.feasible);
        assert!(r.achieved.eps_leak <= budget.eps() + FEASIBILITY_TOL_BITS);
        assert!(r.achieved.delta_leak <= budget.delta() + FEASIBILITY_TOL_BITS);
        // The constraint should be close to active.
        assert!(budget.eps() - r.achieved.eps_leak <= BISECT_TOL_BITS);
    }

    #[test]
    fn loosening_a_budget_never_hurts() {
        let j = demo_joint();
        let p = hamming_problem();
        let opts = SweepOptions::default();
        let tight = solve_for_budget(&j, &p, Budget::new(0.2, 0.3).unwrap(), &opts).unwrap();
        let looser = solve_for_budget(&j, &p, Budget::new(0.4, 0.5).unwrap(), &opts).unwrap();
        assert!(looser.achieved.utility <= tight.achieved.utility + 1e-9);
    }

    #[test]
    fn timeshare_single_feasible_point_is_returned_as_is() {
        let j = demo_joint();
        let p = hamming_problem();
        let grid = MultiplierGrid::new(vec![0.05, 0.4], vec![0.05]).unwrap();
        let swept = sweep(&j, &p, &grid, &SweepOptions::default()).unwrap();
        // Budget feasible only for the noisier point.
        let budget = Budget::new(
            swept.points[1].eps_leak + 0.01,
            swept.points[1].delta_leak + 0.01,
        )
        .unwrap();
        let feasible_count = swept
            .points
            .iter()
            .filter(|q| q.eps_leak <= budget.eps() && q.delta_leak <= budget.delta())
            .count();
        assert_eq!(feasible_count, 1);
        let r = timeshare_to_target(&j, &p, &swept.points, budget, 1e-4, 8).unwrap();
        assert_eq!(r.path, SolvePath::Timeshare);
        let w = r.lambdas.unwrap();
        // Mass may shift toward the better point only through feasible mixes;
        // the starting point carries weight.
        assert!(w[1] > 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn timeshare_bracket_converges_to_the_boundary() {
        let j = demo_joint();
        let p = hamming_problem();
        let grid = MultiplierGrid::new(vec![0.05, 0.8], vec![0.05]).unwrap();
        let swept = sweep(&j, &p, &grid, &SweepOptions::default()).unwrap();
        assert_eq!(swept.points.len(), 2);
        // Pick a budget strictly between the two points' eps values, with
        // delta inactive.
        let eps_budget =
            0.5 * (swept.points[0].eps_leak + swept.points[1].eps_leak);
        let budget = Budget::new(eps_budget, 2.0).unwrap();
        let r = timeshare_to_target(&j, &p, &swept.points, budget, 1e-4, 16).unwrap();
        assert!(r.feasible);
        assert!(r.achieved.eps_leak <= eps_budget);
        assert!(
            eps_budget - r.achieved.eps_leak <= 1e-4,
            "gap = {}",
            eps_budget - r.achieved.eps_leak
        );
    }

    #[test]
    fn timeshare_budget_looser_than_every_point_returns_best_utility() {
        let j = demo_joint();
        let p = hamming_problem();
        let grid = MultiplierGrid::new(vec![0.05, 0.8], vec![0.05]).unwrap();
        let swept = sweep(&j, &p, &grid, &SweepOptions::default()).unwrap();
        let budget = Budget::new(5.0, 5.0).unwrap();
        let r = timeshare_to_target(&j, &p, &swept.points, budget, 1e-4, 8).unwrap();
        let best = swept
            .points
            .iter()
            .map(|q| q.utility)
            .fold(f64::INFINITY, f64::min);
        assert!((r.achieved.utility - best).abs() <= 1e-9);
        // No better target exists, so the best point is returned as-is with a
        // unit coefficient.
        let w = r.lambdas.unwrap();
        assert!(w.iter().any(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn timeshare_needs_two_points() {
        let j = demo_joint();
        let p = hamming_problem();
        let grid = MultiplierGrid::new(vec![0.05], vec![0.05]).unwrap();
        let swept = sweep(&j, &p, &grid, &SweepOptions::default()).unwrap();
        assert!(matches!(
            timeshare_to_target(
                &j,
                &p,
                &swept.points,
                Budget::new(1.0, 1.0).unwrap(),
                1e-4,
                8
            ),
            Err(Error::TooFewPoints { .. })
        ));
    }
}
