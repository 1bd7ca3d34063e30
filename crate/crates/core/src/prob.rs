//! Exact finite-alphabet probability machinery.
//!
//! Conventions used throughout the crate:
//!
//! - All logarithms are base 2; information quantities are in bits.
//! - `0 log 0 = 0` and `0 log(0/0) = 0`, applied entrywise.
//! - Conditioning on a zero-mass event yields a uniform slice. This keeps
//!   every conditional tensor a valid distribution; zero-weight slices never
//!   contribute to any objective.
//! - Probabilities below [`CLAMP_FLOOR`] are clamped to zero after iterative
//!   updates, followed by renormalization.
//!
//! The joint over `(R, Z, X)` (request, prior releases, database) is stored
//! r-major as `(r, z, x)`. Release channels `p(a | z, x)` store the slice over
//! release symbols `a` contiguously per `(z, x)` pair.

use crate::error::{Error, Result};

/// Normalization tolerance: sums must be within this of 1.
pub const SUM_TOL: f64 = 1e-9;
/// Entries this slightly negative are treated as zero; anything lower errors.
pub const NEG_TOL: f64 = -1e-12;
/// Probabilities below this are clamped to zero after updates.
pub const CLAMP_FLOOR: f64 = 1e-15;

/// Variables of the per-step joint distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    /// Requested value.
    R,
    /// Collusion variable: all previously released symbols.
    Z,
    /// Database.
    X,
}

const VAR_ORDER: [Var; 3] = [Var::R, Var::Z, Var::X];

// ---------------------------------------------------------------------------
// Alphabet
// ---------------------------------------------------------------------------

/// A finite alphabet with optional display labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Alphabet {
    size: usize,
    labels: Option<Vec<String>>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("alphabet size must be >= 1".into()));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("alphabet size must be >= 1".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InvalidInput(format!("duplicate label {a:?}")));
            }
        }
        Ok(Self {
            size: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(ls) => ls[i].clone(),
            None => i.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Pmf
// ---------------------------------------------------------------------------

/// A probability mass function over one alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    p: Vec<f64>,
}

impl Pmf {
    /// Validating constructor: entries must be >= -1e-12 (tiny negatives are
    /// zeroed) and sum to 1 within [`SUM_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut p = probs;
        check_mass("pmf", &mut p, |i| format!("({i})"))?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized {
                what: "pmf".into(),
                sum,
            });
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        -self
            .p
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.log2())
            .sum::<f64>()
    }
}

/// Kullback-Leibler divergence `D(p || q)` in bits.
///
/// Returns `+inf` when `q` has a zero where `p` has mass; that is a value, not
/// an error. Alphabet mismatch is an error.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "kl_divergence alphabets".into(),
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.p.iter().zip(&q.p) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += pi * (pi / qi).log2();
        }
    }
    // Exact zero for p == q under the 0 log 0 convention; clamp float dust.
    Ok(if acc < 0.0 && acc > -1e-12 { 0.0 } else { acc })
}

// ---------------------------------------------------------------------------
// Joint2: a joint over an arbitrary pair of variables
// ---------------------------------------------------------------------------

/// A joint distribution over a pair `(A, B)`, used for mutual information.
#[derive(Clone, Debug)]
pub struct Joint2 {
    na: usize,
    nb: usize,
    p: Vec<f64>,
}

impl Joint2 {
    pub fn new(na: usize, nb: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != na * nb {
            return Err(Error::DimensionMismatch {
                what: "joint2 entries".into(),
                expected: na * nb,
                got: p.len(),
            });
        }
        let mut p = p;
        check_mass("joint2", &mut p, |i| format!("({},{})", i / nb, i % nb))?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized {
                what: "joint2".into(),
                sum,
            });
        }
        Ok(Self { na, nb, p })
    }

    pub(crate) fn from_raw(na: usize, nb: usize, p: Vec<f64>) -> Self {
        debug_assert_eq!(p.len(), na * nb);
        Self { na, nb, p }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.nb + b]
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.na];
        for a in 0..self.na {
            for b in 0..self.nb {
                m[a] += self.get(a, b);
            }
        }
        m
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nb];
        for a in 0..self.na {
            for b in 0..self.nb {
                m[b] += self.get(a, b);
            }
        }
        m
    }
}

/// Mutual information `I(A; B)` in bits of a pairwise joint.
///
/// Non-negative, symmetric, `0 log 0 = 0`.
pub fn mutual_information(joint: &Joint2) -> f64 {
    let pa = joint.marginal_a();
    let pb = joint.marginal_b();
    let mut acc = 0.0;
    for a in 0..joint.na {
        for b in 0..joint.nb {
            let pab = joint.get(a, b);
            if pab > 0.0 {
                acc += pab * (pab / (pa[a] * pb[b])).log2();
            }
        }
    }
    // Float dust can push an independent pair a hair negative.
    acc.max(0.0)
}

// ---------------------------------------------------------------------------
// Joint3: the per-step joint p(r, z, x)
// ---------------------------------------------------------------------------

/// The joint distribution `p(r, z, x)` of request, prior releases, database.
///
/// Stored r-major: index `(r, z, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint3 {
    n_r: usize,
    n_z: usize,
    n_x: usize,
    p: Vec<f64>,
}

impl Joint3 {
    pub fn new(n_r: usize, n_z: usize, n_x: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_r * n_z * n_x {
            return Err(Error::DimensionMismatch {
                what: "joint entries".into(),
                expected: n_r * n_z * n_x,
                got: entries.len(),
            });
        }
        let j = Self {
            n_r,
            n_z,
            n_x,
            p: entries,
        };
        let mut j = j;
        j.validate_mut()?;
        Ok(j)
    }

    /// Build from a function over `(r, z, x)`.
    pub fn from_fn(
        n_r: usize,
        n_z: usize,
        n_x: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = vec![0.0; n_r * n_z * n_x];
        for r in 0..n_r {
            for z in 0..n_z {
                for x in 0..n_x {
                    p[(r * n_z + z) * n_x + x] = f(r, z, x);
                }
            }
        }
        Self::new(n_r, n_z, n_x, p)
    }

    fn validate_mut(&mut self) -> Result<()> {
        let (n_z, n_x) = (self.n_z, self.n_x);
        check_mass("joint", &mut self.p, |i| {
            let r = i / (n_z * n_x);
            let z = (i / n_x) % n_z;
            let x = i % n_x;
            format!("(r={r},z={z},x={x})")
        })?;
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized {
                what: "joint".into(),
                sum,
            });
        }
        Ok(())
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn get(&self, r: usize, z: usize, x: usize) -> f64 {
        self.p[(r * self.n_z + z) * self.n_x + x]
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    fn dim(&self, v: Var) -> usize {
        match v {
            Var::R => self.n_r,
            Var::Z => self.n_z,
            Var::X => self.n_x,
        }
    }

    /// Marginal over an arbitrary nonempty subset of `{R, Z, X}`.
    ///
    /// Variables in the output follow the canonical `(R, Z, X)` order.
    pub fn marginal(&self, keep: &[Var]) -> Result<MarginalTensor> {
        if keep.is_empty() {
            return Err(Error::EmptySubset);
        }
        let kept: Vec<Var> = VAR_ORDER
            .iter()
            .copied()
            .filter(|v| keep.contains(v))
            .collect();
        let dims: Vec<usize> = kept.iter().map(|&v| self.dim(v)).collect();
        let size: usize = dims.iter().product();
        let mut v = vec![0.0; size];
        for r in 0..self.n_r {
            for z in 0..self.n_z {
                for x in 0..self.n_x {
                    let idx = linear_index(&kept, &dims, r, z, x);
                    v[idx] += self.get(r, z, x);
                }
            }
        }
        Ok(MarginalTensor {
            vars: kept,
            dims,
            v,
        })
    }

    /// Conditional tensor `p(target | given)` for disjoint subsets.
    ///
    /// Slices with zero conditioning mass are filled uniformly.
    pub fn condition(&self, target: &[Var], given: &[Var]) -> Result<ConditionalTensor> {
        if target.is_empty() {
            return Err(Error::EmptySubset);
        }
        for v in target {
            if given.contains(v) {
                return Err(Error::InvalidInput(format!(
                    "variable {v:?} in both target and given"
                )));
            }
        }
        let tgt: Vec<Var> = VAR_ORDER
            .iter()
            .copied()
            .filter(|v| target.contains(v))
            .collect();
        let giv: Vec<Var> = VAR_ORDER
            .iter()
            .copied()
            .filter(|v| given.contains(v))
            .collect();
        let tdims: Vec<usize> = tgt.iter().map(|&v| self.dim(v)).collect();
        let gdims: Vec<usize> = giv.iter().map(|&v| self.dim(v)).collect();
        let tsize: usize = tdims.iter().product();
        let gsize: usize = gdims.iter().product();

        let mut num = vec![0.0; gsize * tsize];
        let mut den = vec![0.0; gsize];
        for r in 0..self.n_r {
            for z in 0..self.n_z {
                for x in 0..self.n_x {
                    let ti = linear_index(&tgt, &tdims, r, z, x);
                    let gi = linear_index(&giv, &gdims, r, z, x);
                    num[gi * tsize + ti] += self.get(r, z, x);
                    den[gi] += self.get(r, z, x);
                }
            }
        }
        for gi in 0..gsize {
            if den[gi] > 0.0 {
                for ti in 0..tsize {
                    num[gi * tsize + ti] /= den[gi];
                }
            } else {
                for ti in 0..tsize {
                    num[gi * tsize + ti] = 1.0 / tsize as f64;
                }
            }
        }
        Ok(ConditionalTensor {
            target: tgt,
            given: giv,
            target_dims: tdims,
            given_dims: gdims,
            v: num,
        })
    }

    /// The `(z, x)` marginal as a pairwise joint.
    pub fn joint_zx(&self) -> Joint2 {
        let mut p = vec![0.0; self.n_z * self.n_x];
        for r in 0..self.n_r {
            for z in 0..self.n_z {
                for x in 0..self.n_x {
                    p[z * self.n_x + x] += self.get(r, z, x);
                }
            }
        }
        Joint2::from_raw(self.n_z, self.n_x, p)
    }

    /// The `(r, (z,x))` pairing, for data-processing bounds.
    pub fn joint_r_zx(&self) -> Joint2 {
        Joint2::from_raw(self.n_r, self.n_z * self.n_x, self.p.clone())
    }
}

/// Validate a joint tensor, reporting the first offending coordinate.
pub fn validate_joint(j: &Joint3) -> Result<()> {
    let mut copy = j.clone();
    copy.validate_mut()
}

fn linear_index(vars: &[Var], dims: &[usize], r: usize, z: usize, x: usize) -> usize {
    let mut idx = 0;
    for (v, d) in vars.iter().zip(dims) {
        let coord = match v {
            Var::R => r,
            Var::Z => z,
            Var::X => x,
        };
        idx = idx * d + coord;
    }
    idx
}

/// Result of [`Joint3::marginal`]: a dense tensor over the kept variables.
#[derive(Clone, Debug)]
pub struct MarginalTensor {
    vars: Vec<Var>,
    dims: Vec<usize>,
    v: Vec<f64>,
}

impl MarginalTensor {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        assert_eq!(coords.len(), self.dims.len());
        let mut idx = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            idx = idx * d + c;
        }
        self.v[idx]
    }

    /// Interpret a one-variable marginal as a [`Pmf`].
    pub fn into_pmf(self) -> Result<Pmf> {
        if self.dims.len() != 1 {
            return Err(Error::InvalidInput(format!(
                "marginal over {} variables is not a pmf",
                self.dims.len()
            )));
        }
        Pmf::new(self.v)
    }
}

/// Result of [`Joint3::condition`]: `p(target | given)`.
#[derive(Clone, Debug)]
pub struct ConditionalTensor {
    target: Vec<Var>,
    given: Vec<Var>,
    target_dims: Vec<usize>,
    given_dims: Vec<usize>,
    v: Vec<f64>,
}

impl ConditionalTensor {
    pub fn target_vars(&self) -> &[Var] {
        &self.target
    }

    pub fn given_vars(&self) -> &[Var] {
        &self.given
    }

    pub fn get(&self, target: &[usize], given: &[usize]) -> f64 {
        assert_eq!(target.len(), self.target_dims.len());
        assert_eq!(given.len(), self.given_dims.len());
        let mut ti = 0;
        for (c, d) in target.iter().zip(&self.target_dims) {
            ti = ti * d + c;
        }
        let mut gi = 0;
        for (c, d) in given.iter().zip(&self.given_dims) {
            gi = gi * d + c;
        }
        let tsize: usize = self.target_dims.iter().product();
        self.v[gi * tsize + ti]
    }
}

// ---------------------------------------------------------------------------
// Channel
// ---------------------------------------------------------------------------

/// A release channel `p(a | z, x)` over release symbols `a`.
///
/// Each `(z, x)` slice is a distribution over `a`. Stored with the `a` axis
/// contiguous per `(z, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    n_a: usize,
    n_z: usize,
    n_x: usize,
    p: Vec<f64>,
}

impl Channel {
    /// Validating constructor. `entries` are laid out `(z, x, a)`, the `a`
    /// axis fastest.
    pub fn new(n_a: usize, n_z: usize, n_x: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_a * n_z * n_x {
            return Err(Error::DimensionMismatch {
                what: "channel entries".into(),
                expected: n_a * n_z * n_x,
                got: entries.len(),
            });
        }
        let mut p = entries;
        check_mass("channel", &mut p, |i| {
            let a = i % n_a;
            let x = (i / n_a) % n_x;
            let z = i / (n_a * n_x);
            format!("(a={a},z={z},x={x})")
        })?;
        for z in 0..n_z {
            for x in 0..n_x {
                let base = (z * n_x + x) * n_a;
                let sum: f64 = p[base..base + n_a].iter().sum();
                if (sum - 1.0).abs() > SUM_TOL {
                    return Err(Error::NotNormalized {
                        what: format!("channel slice (z={z},x={x})"),
                        sum,
                    });
                }
            }
        }
        Ok(Self { n_a, n_z, n_x, p })
    }

    pub fn from_fn(
        n_a: usize,
        n_z: usize,
        n_x: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = vec![0.0; n_a * n_z * n_x];
        for z in 0..n_z {
            for x in 0..n_x {
                for a in 0..n_a {
                    p[(z * n_x + x) * n_a + a] = f(a, z, x);
                }
            }
        }
        Self::new(n_a, n_z, n_x, p)
    }

    /// The uniform channel.
    pub fn uniform(n_a: usize, n_z: usize, n_x: usize) -> Self {
        Self {
            n_a,
            n_z,
            n_x,
            p: vec![1.0 / n_a as f64; n_a * n_z * n_x],
        }
    }

    /// The constant channel releasing `symbol` regardless of `(z, x)`.
    pub fn constant(symbol: usize, n_a: usize, n_z: usize, n_x: usize) -> Self {
        let mut p = vec![0.0; n_a * n_z * n_x];
        for z in 0..n_z {
            for x in 0..n_x {
                p[(z * n_x + x) * n_a + symbol] = 1.0;
            }
        }
        Self { n_a, n_z, n_x, p }
    }

    /// Deterministic channel `a = f(z, x)`.
    pub fn deterministic(
        n_a: usize,
        n_z: usize,
        n_x: usize,
        f: impl Fn(usize, usize) -> usize,
    ) -> Self {
        let mut p = vec![0.0; n_a * n_z * n_x];
        for z in 0..n_z {
            for x in 0..n_x {
                p[(z * n_x + x) * n_a + f(z, x)] = 1.0;
            }
        }
        Self { n_a, n_z, n_x, p }
    }

    pub fn n_symbols(&self) -> usize {
        self.n_a
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn get(&self, a: usize, z: usize, x: usize) -> f64 {
        self.p[(z * self.n_x + x) * self.n_a + a]
    }

    pub fn slice(&self, z: usize, x: usize) -> &[f64] {
        let base = (z * self.n_x + x) * self.n_a;
        &self.p[base..base + self.n_a]
    }

    pub(crate) fn slice_mut(&mut self, z: usize, x: usize) -> &mut [f64] {
        let base = (z * self.n_x + x) * self.n_a;
        &mut self.p[base..base + self.n_a]
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    /// Largest absolute entrywise difference.
    pub fn linf_distance(&self, other: &Channel) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Convex combination of channels over the same alphabets.
    pub fn mix(parts: &[(f64, &Channel)]) -> Result<Channel> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty mixture".into()))?;
        let mut p = vec![0.0; first.p.len()];
        for (w, ch) in parts {
            if ch.p.len() != p.len() || ch.n_a != first.n_a {
                return Err(Error::DimensionMismatch {
                    what: "mixture channel".into(),
                    expected: p.len(),
                    got: ch.p.len(),
                });
            }
            for (acc, v) in p.iter_mut().zip(&ch.p) {
                *acc += w * v;
            }
        }
        Channel::new(first.n_a, first.n_z, first.n_x, p)
    }

    /// SHA-256 digest of dimensions plus entries (little-endian f64 bytes) in
    /// `(z, x, a)` order. Used for transcript auditing.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for d in [self.n_a, self.n_z, self.n_x] {
            h.update((d as u64).to_le_bytes());
        }
        for v in &self.p {
            h.update(v.to_le_bytes());
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------------------
// DistortionMatrix
// ---------------------------------------------------------------------------

/// Distortion cost `d(a, r)` between a released symbol and a requested value.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionMatrix {
    n_a: usize,
    n_r: usize,
    d: Vec<f64>,
}

impl DistortionMatrix {
    pub fn new(n_a: usize, n_r: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_a * n_r {
            return Err(Error::DimensionMismatch {
                what: "distortion entries".into(),
                expected: n_a * n_r,
                got: entries.len(),
            });
        }
        for (i, &v) in entries.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "distortion entry (a={},r={}) = {v} must be finite and >= 0",
                    i / n_r,
                    i % n_r
                )));
            }
        }
        Ok(Self {
            n_a,
            n_r,
            d: entries,
        })
    }

    /// Hamming distortion on a shared alphabet.
    pub fn hamming(n: usize) -> Self {
        let mut d = vec![1.0; n * n];
        for i in 0..n {
            d[i * n + i] = 0.0;
        }
        Self { n_a: n, n_r: n, d }
    }

    pub fn n_symbols(&self) -> usize {
        self.n_a
    }

    pub fn n_requests(&self) -> usize {
        self.n_r
    }

    pub fn get(&self, a: usize, r: usize) -> f64 {
        self.d[a * self.n_r + r]
    }

    pub fn max_entry(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Induced joints and information functionals
// ---------------------------------------------------------------------------

/// The joint `p(a, r, z, x) = p(a | z, x) p(r, z, x)` induced by a channel.
///
/// Well-defined because the release depends on `(Z, X)` only, never directly
/// on `R`.
#[derive(Clone, Debug)]
pub struct Joint4 {
    n_a: usize,
    n_r: usize,
    n_z: usize,
    n_x: usize,
    p: Vec<f64>,
}

/// Lift a channel onto a joint: entry `(a, r, z, x) = ch(a|z,x) j(r,z,x)`.
pub fn induced_joint4(ch: &Channel, j: &Joint3) -> Result<Joint4> {
    check_compat(ch, j)?;
    let (n_a, n_r, n_z, n_x) = (ch.n_a, j.n_r, j.n_z, j.n_x);
    let mut p = vec![0.0; n_a * n_r * n_z * n_x];
    for a in 0..n_a {
        for r in 0..n_r {
            for z in 0..n_z {
                for x in 0..n_x {
                    p[((a * n_r + r) * n_z + z) * n_x + x] = ch.get(a, z, x) * j.get(r, z, x);
                }
            }
        }
    }
    Ok(Joint4 {
        n_a,
        n_r,
        n_z,
        n_x,
        p,
    })
}

impl Joint4 {
    pub fn get(&self, a: usize, r: usize, z: usize, x: usize) -> f64 {
        self.p[((a * self.n_r + r) * self.n_z + z) * self.n_x + x]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Marginalize the release symbol away, recovering the base joint.
    pub fn marginal_rzx(&self) -> Joint3 {
        let mut p = vec![0.0; self.n_r * self.n_z * self.n_x];
        for a in 0..self.n_a {
            for r in 0..self.n_r {
                for z in 0..self.n_z {
                    for x in 0..self.n_x {
                        p[(r * self.n_z + z) * self.n_x + x] += self.get(a, r, z, x);
                    }
                }
            }
        }
        Joint3 {
            n_r: self.n_r,
            n_z: self.n_z,
            n_x: self.n_x,
            p,
        }
    }

    /// The `(a, r)` pair marginal.
    pub fn joint_ar(&self) -> Joint2 {
        let mut p = vec![0.0; self.n_a * self.n_r];
        for a in 0..self.n_a {
            for r in 0..self.n_r {
                for z in 0..self.n_z {
                    for x in 0..self.n_x {
                        p[a * self.n_r + r] += self.get(a, r, z, x);
                    }
                }
            }
        }
        Joint2::from_raw(self.n_a, self.n_r, p)
    }

    /// The `(a, x)` pair marginal.
    pub fn joint_ax(&self) -> Joint2 {
        let mut p = vec![0.0; self.n_a * self.n_x];
        for a in 0..self.n_a {
            for r in 0..self.n_r {
                for z in 0..self.n_z {
                    for x in 0..self.n_x {
                        p[a * self.n_x + x] += self.get(a, r, z, x);
                    }
                }
            }
        }
        Joint2::from_raw(self.n_a, self.n_x, p)
    }

    /// The `((a,z), x)` pair marginal.
    pub fn joint_az_x(&self) -> Joint2 {
        let mut p = vec![0.0; self.n_a * self.n_z * self.n_x];
        for a in 0..self.n_a {
            for r in 0..self.n_r {
                for z in 0..self.n_z {
                    for x in 0..self.n_x {
                        p[(a * self.n_z + z) * self.n_x + x] += self.get(a, r, z, x);
                    }
                }
            }
        }
        Joint2::from_raw(self.n_a * self.n_z, self.n_x, p)
    }
}

fn check_compat(ch: &Channel, j: &Joint3) -> Result<()> {
    if ch.n_z != j.n_z {
        return Err(Error::DimensionMismatch {
            what: "channel z axis".into(),
            expected: j.n_z,
            got: ch.n_z,
        });
    }
    if ch.n_x != j.n_x {
        return Err(Error::DimensionMismatch {
            what: "channel x axis".into(),
            expected: j.n_x,
            got: ch.n_x,
        });
    }
    Ok(())
}

/// Individual leakage `I(A; X)`: what the current recipient alone learns.
pub fn leakage_individual(ch: &Channel, j: &Joint3) -> Result<f64> {
    check_compat(ch, j)?;
    let pzx = j.joint_zx();
    let mut p = vec![0.0; ch.n_a * j.n_x];
    for a in 0..ch.n_a {
        for z in 0..j.n_z {
            for x in 0..j.n_x {
                p[a * j.n_x + x] += ch.get(a, z, x) * pzx.get(z, x);
            }
        }
    }
    Ok(mutual_information(&Joint2::from_raw(ch.n_a, j.n_x, p)))
}

/// Collusion leakage `I(A, Z; X)`: what all recipients combined could learn.
pub fn leakage_collusion(ch: &Channel, j: &Joint3) -> Result<f64> {
    check_compat(ch, j)?;
    let pzx = j.joint_zx();
    let mut p = vec![0.0; ch.n_a * j.n_z * j.n_x];
    for a in 0..ch.n_a {
        for z in 0..j.n_z {
            for x in 0..j.n_x {
                p[(a * j.n_z + z) * j.n_x + x] = ch.get(a, z, x) * pzx.get(z, x);
            }
        }
    }
    Ok(mutual_information(&Joint2::from_raw(
        ch.n_a * j.n_z,
        j.n_x,
        p,
    )))
}

/// Expected distortion of the release against the requested value.
pub fn expected_distortion(ch: &Channel, j: &Joint3, d: &DistortionMatrix) -> Result<f64> {
    check_compat(ch, j)?;
    if d.n_a != ch.n_a {
        return Err(Error::DimensionMismatch {
            what: "distortion release axis".into(),
            expected: ch.n_a,
            got: d.n_a,
        });
    }
    if d.n_r != j.n_r {
        return Err(Error::DimensionMismatch {
            what: "distortion request axis".into(),
            expected: j.n_r,
            got: d.n_r,
        });
    }
    let mut acc = 0.0;
    for a in 0..ch.n_a {
        for r in 0..j.n_r {
            for z in 0..j.n_z {
                for x in 0..j.n_x {
                    acc += ch.get(a, z, x) * j.get(r, z, x) * d.get(a, r);
                }
            }
        }
    }
    Ok(acc)
}

/// Mutual-information utility `I(A; R)`, computed through the induced joint.
pub fn utility_mi(ch: &Channel, j: &Joint3) -> Result<f64> {
    let j4 = induced_joint4(ch, j)?;
    Ok(mutual_information(&j4.joint_ar()))
}

/// Zero tiny negatives in place; error on anything below [`NEG_TOL`].
fn check_mass(
    what: &str,
    entries: &mut [f64],
    coord: impl Fn(usize) -> String,
) -> Result<()> {
    for (i, v) in entries.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{what} entry at {} is not finite",
                coord(i)
            )));
        }
        if *v < NEG_TOL {
            return Err(Error::NegativeMass {
                what: what.into(),
                coord: coord(i),
                value: *v,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Clamp entries below [`CLAMP_FLOOR`] to zero and renormalize each slice of
/// length `slice_len` to sum 1.
pub(crate) fn clamp_and_renormalize(entries: &mut [f64], slice_len: usize) {
    for slice in entries.chunks_mut(slice_len) {
        let mut sum = 0.0;
        for v in slice.iter_mut() {
            if *v < CLAMP_FLOOR {
                *v = 0.0;
            }
            sum += *v;
        }
        if sum > 0.0 {
            for v in slice.iter_mut() {
                *v /= sum;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------


#[cfg(test)]
mod tests {
    use super::test_fixtures::*;
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn demo_joint_validates() {
        let j = demo_joint();
        validate_joint(&j).unwrap();
    }

    #[test]
    fn all_zero_joint_is_not_normalized() {
        let err = Joint3::new(2, 2, 2, vec![0.0; 8]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }), "{err}");
    }

    #[test]
    fn uniform_joint_validates() {
        Joint3::new(2, 2, 2, vec![0.125; 8]).unwrap();
    }

    #[test]
    fn negative_mass_is_reported_with_coordinates() {
        let mut e = vec![0.125; 8];
        e[3] = -1e-6;
        e[0] += 0.125 + 1e-6;
        let err = Joint3::new(2, 2, 2, e).unwrap_err();
        match err {
            Error::NegativeMass { coord, .. } => assert_eq!(coord, "(r=0,z=1,x=1)"),
            other => panic!("expected NegativeMass, got {other}"),
        }
    }

    #[test]
    fn marginals_of_demo_joint() {
        let j = demo_joint();
        let px = j.marginal(&[Var::X]).unwrap().into_pmf().unwrap();
        assert!(close(px.get(0), 0.518, 1e-12));
        assert!(close(px.get(1), 0.482, 1e-12));
        let pr = j.marginal(&[Var::R]).unwrap().into_pmf().unwrap();
        assert!(close(pr.get(0), 0.518, 1e-12));
        assert!(close(pr.get(1), 0.482, 1e-12));
    }

    #[test]
    fn marginal_of_uniform_is_uniform() {
        let j = Joint3::new(2, 2, 2, vec![0.125; 8]).unwrap();
        let pz = j.marginal(&[Var::Z]).unwrap().into_pmf().unwrap();
        assert!(close(pz.get(0), 0.5, 1e-15));
        assert!(close(pz.get(1), 0.5, 1e-15));
    }

    #[test]
    fn marginal_requires_nonempty_subset() {
        let j = demo_joint();
        assert!(matches!(j.marginal(&[]), Err(Error::EmptySubset)));
    }

    #[test]
    fn conditioning_on_demo_joint() {
        let j = demo_joint();
        let c = j.condition(&[Var::R], &[Var::Z, Var::X]).unwrap();
        // p(r | z=0, x=0) = (0.024, 0.203) / 0.227
        assert!(close(c.get(&[0], &[0, 0]), 0.024 / 0.227, 1e-12));
        assert!(close(c.get(&[1], &[0, 0]), 0.203 / 0.227, 1e-12));
        assert!(close(c.get(&[0], &[0, 0]), 0.105726872246696, 1e-12));
    }

    #[test]
    fn conditioning_independent_uniform_gives_uniform() {
        let j = Joint3::new(2, 2, 2, vec![0.125; 8]).unwrap();
        let c = j.condition(&[Var::R], &[Var::Z, Var::X]).unwrap();
        for z in 0..2 {
            for x in 0..2 {
                assert!(close(c.get(&[0], &[z, x]), 0.5, 1e-15));
            }
        }
    }

    #[test]
    fn conditioning_on_zero_mass_gives_uniform() {
        // All mass on z = 0.
        let j = Joint3::from_fn(2, 2, 2, |_r, z, _x| if z == 0 { 0.25 } else { 0.0 }).unwrap();
        let c = j.condition(&[Var::R], &[Var::Z, Var::X]).unwrap();
        assert!(close(c.get(&[0], &[1, 0]), 0.5, 1e-15));
        assert!(close(c.get(&[1], &[1, 1]), 0.5, 1e-15));
    }

    #[test]
    fn induced_joint_lifts_deterministic_channel() {
        let j = demo_joint();
        let ch = flip_x_channel();
        let j4 = induced_joint4(&ch, &j).unwrap();
        assert!(close(j4.total(), 1.0, 1e-12));
        // Release a=1 happens exactly when x=0.
        let mut mass_a1_x0 = 0.0;
        for r in 0..2 {
            for z in 0..2 {
                mass_a1_x0 += j4.get(1, r, z, 0);
            }
        }
        assert!(close(mass_a1_x0, 0.518, 1e-12));
        // p(a=1) = p(x=0)
        let pa = j4.joint_ar().marginal_a();
        assert!(close(pa[1], 0.518, 1e-12));
    }

    #[test]
    fn induced_joint_uniform_channel_has_uniform_release() {
        let j = demo_joint();
        let ch = Channel::uniform(2, 2, 2);
        let j4 = induced_joint4(&ch, &j).unwrap();
        let pa = j4.joint_ar().marginal_a();
        assert!(close(pa[0], 0.5, 1e-12));
    }

    #[test]
    fn induced_joint_marginal_consistency() {
        let j = demo_joint();
        let ch = noisy_channel();
        let j4 = induced_joint4(&ch, &j).unwrap();
        let back = j4.marginal_rzx();
        for (a, b) in back.entries().iter().zip(j.entries()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn induced_joint_dimension_mismatch() {
        let j = demo_joint();
        let ch = Channel::uniform(2, 3, 2);
        assert!(matches!(
            induced_joint4(&ch, &j),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mutual_information_of_independent_pair_is_zero() {
        let j = Joint2::new(2, 2, vec![0.25; 4]).unwrap();
        assert_eq!(mutual_information(&j), 0.0);
    }

    #[test]
    fn mutual_information_of_identity_pair_is_one_bit() {
        let j = Joint2::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(close(mutual_information(&j), 1.0, 1e-15));
    }

    #[test]
    fn leakage_of_flip_channel_is_binary_entropy() {
        let j = demo_joint();
        let ch = flip_x_channel();
        let eps = leakage_individual(&ch, &j).unwrap();
        // H_b(0.518)
        assert!(close(eps, 0.9990649315776107, 1e-12), "eps = {eps}");
    }

    #[test]
    fn constant_channel_leaks_nothing() {
        // Degenerate Z so the collusion leakage floor is zero too.
        let full = demo_joint();
        let j = Joint3::from_fn(2, 1, 2, |r, _z, x| {
            (0..2).map(|z| full.get(r, z, x)).sum::<f64>()
        })
        .unwrap();
        let ch = Channel::constant(0, 2, 1, 2);
        assert_eq!(leakage_individual(&ch, &j).unwrap(), 0.0);
        assert_eq!(leakage_collusion(&ch, &j).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_identity_with_degenerate_z_leaks_entropy() {
        // r = x, |Z| = 1, p(x) = (0.518, 0.482).
        let j = Joint3::from_fn(2, 1, 2, |r, _z, x| {
            if r == x {
                [0.518, 0.482][x]
            } else {
                0.0
            }
        })
        .unwrap();
        let ch = Channel::deterministic(2, 1, 2, |_z, x| x);
        let h = 0.9990649315776107;
        assert!(close(leakage_individual(&ch, &j).unwrap(), h, 1e-12));
        assert!(close(leakage_collusion(&ch, &j).unwrap(), h, 1e-12));
    }

    #[test]
    fn noisy_channel_leakages_match_direct_evaluation() {
        let j = demo_joint();
        let ch = noisy_channel();
        let eps = leakage_individual(&ch, &j).unwrap();
        let delta = leakage_collusion(&ch, &j).unwrap();
        assert!(close(eps, 0.585290424233, 1e-9), "eps = {eps}");
        assert!(close(delta, 0.609884954348, 1e-9), "delta = {delta}");
        assert!(eps <= delta);
    }

    #[test]
    fn expected_distortion_of_flip_channel() {
        let j = demo_joint();
        let d = DistortionMatrix::hamming(2);
        let ed = expected_distortion(&flip_x_channel(), &j, &d).unwrap();
        // P(R = X) = 0.087 + 0.051
        assert!(close(ed, 0.138, 1e-12), "ed = {ed}");
    }

    #[test]
    fn expected_distortion_zero_cost_matrix() {
        let j = demo_joint();
        let d = DistortionMatrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(
            expected_distortion(&flip_x_channel(), &j, &d).unwrap(),
            0.0
        );
    }

    #[test]
    fn expected_distortion_of_constant_guess() {
        let j = demo_joint();
        let d = DistortionMatrix::hamming(2);
        let ch = Channel::constant(1, 2, 2, 2);
        let ed = expected_distortion(&ch, &j, &d).unwrap();
        // P(R = 0)
        assert!(close(ed, 0.518, 1e-12), "ed = {ed}");
    }

    #[test]
    fn utility_mi_of_constant_channel_is_zero() {
        let j = demo_joint();
        let ch = Channel::constant(0, 2, 2, 2);
        assert_eq!(utility_mi(&ch, &j).unwrap(), 0.0);
    }

    #[test]
    fn utility_mi_bounded_by_data_processing() {
        let j = demo_joint();
        for ch in [flip_x_channel(), noisy_channel(), Channel::uniform(2, 2, 2)] {
            let u = utility_mi(&ch, &j).unwrap();
            let bound = mutual_information(&j.joint_r_zx());
            assert!(u <= bound + 1e-12, "I(A;R) = {u} > I((Z,X);R) = {bound}");
        }
    }

    #[test]
    fn utility_mi_of_noisy_channel_pins() {
        let j = demo_joint();
        let u = utility_mi(&noisy_channel(), &j).unwrap();
        assert!(close(u, 0.292992257431, 1e-9), "u = {u}");
    }

    #[test]
    fn kl_divergence_basics() {
        let p = Pmf::new(vec![0.9, 0.1]).unwrap();
        let q = Pmf::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let point = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert!(close(kl_divergence(&point, &q).unwrap(), 1.0, 1e-15));
        assert!(close(
            kl_divergence(&p, &q).unwrap(),
            0.5310044064107189,
            1e-12
        ));
        // Infinite divergence is a value.
        assert!(kl_divergence(&p, &point).unwrap().is_infinite());
    }

    #[test]
    fn channel_slice_normalization_is_enforced() {
        let mut e = vec![0.5; 8];
        e[0] = 0.7;
        let err = Channel::new(2, 2, 2, e).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn channel_digest_is_stable() {
        let a = noisy_channel();
        let b = noisy_channel();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), flip_x_channel().digest());
    }

    #[test]
    fn alphabet_labels_must_be_unique() {
        assert!(Alphabet::with_labels(vec!["a".into(), "a".into()]).is_err());
        let alpha = Alphabet::with_labels(vec!["lo".into(), "hi".into()]).unwrap();
        assert_eq!(alpha.size(), 2);
        assert_eq!(alpha.label(1), "hi");
    }
}
