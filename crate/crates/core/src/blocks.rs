//! Block systems `(x_n, x*_n)`, the operators `A`, `B`, `D` built from them,
//! the hypothesis ledger for the perturbation argument and the assembly of
//! `I = B̃ T Ã`.
//!
//! A block system reproduces the coordinates of a small truncation `Z_s`
//! inside a big one `Z_b`: for every small coordinate `n` it names a host
//! component `κ(n)` of `Z_b`, a set `E_n` of within-component ordinals, weights
//! `λ, μ >= 0` and signs `ε`, and defines
//! `x_n = Σ ε_i λ_i e_(κ(n),i)` and `x*_n = Σ ε_i μ_i e*_(κ(n),i)`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{is_diagonal, operator_norm_bounds, sub_trunc, DiagonalFactors, OperatorZ};
use crate::rng;
use crate::sumspace::{component_tail_dual, restricted_dual_norm, ZFunctional, ZTrunc};

/// JSON has no infinity: `+∞` (an absent bound) is written as `null`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One reproduced coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub host: usize,
    /// `E_n`: strictly increasing 1-based ordinals in the host component.
    pub support: Vec<usize>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub signs: Vec<i8>,
}

impl Block {
    /// `x*_n(x_n) = Σ λ_i μ_i` (the signs square away).
    pub fn pairing(&self) -> f64 {
        self.lambda.iter().zip(&self.mu).map(|(l, m)| l * m).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockSystemRepr", into = "BlockSystemRepr")]
pub struct BlockSystem {
    small: ZTrunc,
    big: ZTrunc,
    blocks: Vec<Block>,
}

#[derive(Serialize, Deserialize)]
struct BlockSystemRepr {
    small: ZTrunc,
    big: ZTrunc,
    blocks: Vec<Block>,
}

impl TryFrom<BlockSystemRepr> for BlockSystem {
    type Error = Error;
    fn try_from(r: BlockSystemRepr) -> Result<Self> {
        BlockSystem::new(r.small, r.big, r.blocks)
    }
}

impl From<BlockSystem> for BlockSystemRepr {
    fn from(b: BlockSystem) -> Self {
        BlockSystemRepr { small: b.small, big: b.big, blocks: b.blocks }
    }
}

impl BlockSystem {
    /// `blocks[n]` reproduces the small global coordinate `n`.
    pub fn new(small: ZTrunc, big: ZTrunc, blocks: Vec<Block>) -> Result<Self> {
        if blocks.len() != small.dim() {
            return Err(Error::ShapeMismatch { expected: small.dim(), found: blocks.len() });
        }
        let mut used: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); big.len()];
        for (n, b) in blocks.iter().enumerate() {
            if b.host >= big.len() {
                return Err(Error::InvalidArgument(format!("block {n}: host {} outside the ambient sum", b.host)));
            }
            let len = b.support.len();
            if len == 0 || b.lambda.len() != len || b.mu.len() != len || b.signs.len() != len {
                return Err(Error::InvalidArgument(format!("block {n}: support and weights must be nonempty and equally long")));
            }
            if !b.support.windows(2).all(|w| w[0] < w[1]) || b.support[0] == 0 || b.support[len - 1] > big.component_dim(b.host)
            {
                return Err(Error::InvalidArgument(format!("block {n}: support must be increasing ordinals of the host")));
            }
            if b.lambda.iter().chain(&b.mu).any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidArgument(format!("block {n}: weights must be finite and non-negative")));
            }
            if b.signs.iter().any(|s| s.abs() != 1) {
                return Err(Error::InvalidArgument(format!("block {n}: signs must be ±1")));
            }
            for &i in &b.support {
                if !used[b.host].insert(i) {
                    return Err(Error::InvalidArgument(format!("block {n}: ordinal {i} of host {} is reused", b.host)));
                }
            }
        }
        Ok(Self { small, big, blocks })
    }

    /// `x_n = e_n`, `x*_n = e*_n` on a single truncation.
    pub fn identity(trunc: &ZTrunc) -> Self {
        Self::scaled_identity(trunc, 1.0, 1.0)
    }

    /// `x_n = a e_n`, `x*_n = b e*_n`.
    pub fn scaled_identity(trunc: &ZTrunc, a: f64, b: f64) -> Self {
        let blocks = trunc
            .coords()
            .iter()
            .map(|&(k, j)| Block { host: k, support: vec![j], lambda: vec![a], mu: vec![b], signs: vec![1] })
            .collect();
        Self::new(trunc.clone(), trunc.clone(), blocks).expect("identity system is valid")
    }

    pub fn small(&self) -> &ZTrunc {
        &self.small
    }

    pub fn big(&self) -> &ZTrunc {
        &self.big
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Normalized big coordinates of `x_n`.
    pub fn x_coords(&self, n: usize) -> Vec<f64> {
        self.weighted(n, &self.blocks[n].lambda)
    }

    /// Normalized big dual coordinates of `x*_n`.
    pub fn xstar_coords(&self, n: usize) -> Vec<f64> {
        self.weighted(n, &self.blocks[n].mu)
    }

    pub fn xstar(&self, n: usize) -> ZFunctional {
        ZFunctional::from_coords(&self.big, &self.xstar_coords(n)).expect("shape from the big truncation")
    }

    fn weighted(&self, n: usize, w: &[f64]) -> Vec<f64> {
        let b = &self.blocks[n];
        let mut x = vec![0.0; self.big.dim()];
        for ((&i, wi), &s) in b.support.iter().zip(w).zip(&b.signs) {
            x[self.big.global_index(b.host, i).expect("validated support")] = f64::from(s) * wi;
        }
        x
    }
}

fn check_pair(small: &ZTrunc, big: &ZTrunc, bs: &BlockSystem) -> Result<()> {
    if bs.small != *small || bs.big != *big {
        return Err(Error::DimensionMismatch("block system does not cover the given truncations".into()));
    }
    Ok(())
}

/// `A e_n = x_n`, from `Z_small` to `Z_big`.
pub fn build_a(small: &ZTrunc, big: &ZTrunc, bs: &BlockSystem) -> Result<OperatorZ> {
    check_pair(small, big, bs)?;
    let mut m = DMatrix::zeros(big.dim(), small.dim());
    for n in 0..bs.len() {
        m.set_column(n, &DVector::from_vec(bs.x_coords(n)));
    }
    OperatorZ::new(small.clone(), big.clone(), m)
}

/// `B x = Σ x*_n(x) e_n`, from `Z_big` to `Z_small`.
pub fn build_b(big: &ZTrunc, small: &ZTrunc, bs: &BlockSystem) -> Result<OperatorZ> {
    check_pair(small, big, bs)?;
    let mut m = DMatrix::zeros(small.dim(), big.dim());
    for n in 0..bs.len() {
        m.set_row(n, &DVector::from_vec(bs.xstar_coords(n)).transpose());
    }
    OperatorZ::new(big.clone(), small.clone(), m)
}

/// `B T A`, the matrix `[x*_m(T x_n)]_{m,n}` on `Z_small`.
pub fn interaction_matrix(t: &OperatorZ, bs: &BlockSystem) -> Result<OperatorZ> {
    if t.domain() != bs.big() || t.codomain() != bs.big() {
        return Err(Error::DimensionMismatch("operator does not act on the ambient sum".into()));
    }
    let a = build_a(bs.small(), bs.big(), bs)?;
    let b = build_b(bs.big(), bs.small(), bs)?;
    b.compose(&t.compose(&a)?)
}

/// `D e_n = x*_n(T x_n) e_n`.
pub fn build_d(t: &OperatorZ, bs: &BlockSystem) -> Result<OperatorZ> {
    if t.domain() != bs.big() || t.codomain() != bs.big() {
        return Err(Error::DimensionMismatch("operator does not act on the ambient sum".into()));
    }
    let diag: Vec<f64> = (0..bs.len())
        .map(|n| {
            let tx = t.apply_coords(&bs.x_coords(n));
            bs.xstar_coords(n).iter().zip(&tx).map(|(a, b)| a * b).sum()
        })
        .collect();
    OperatorZ::from_diagonal(bs.small(), &diag)
}

/// Bounds on the impartial equivalence constant `C` of two systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    /// Squared ratio attained by an explicit coefficient vector.
    #[serde(with = "unbounded")]
    pub certified_lower_c: f64,
    /// After local ascent from the best sample; at least the certified value.
    #[serde(with = "unbounded")]
    pub heuristic_c: f64,
    /// `true` when computed exactly from singular values (Hilbert norms).
    pub exact: bool,
}

fn hilbert_equivalence(cols: &DMatrix<f64>) -> Equivalence {
    let sv = cols.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let c = if smin > 0.0 { (smax * smax).max(1.0 / (smin * smin)) } else { f64::INFINITY };
    Equivalence { certified_lower_c: c, heuristic_c: c, exact: true }
}

/// Coefficients on small component `k`, and the positions of its blocks.
fn component_slice(bs: &BlockSystem, k: usize) -> Result<&[usize]> {
    if k >= bs.small().len() {
        return Err(Error::InvalidArgument(format!("no component {k} in the small truncation")));
    }
    Ok(bs.small().component_positions(k))
}

/// `Some(a)` when `x_(k,j) = a e_(κ,j)` inside a host with the same norm, so
/// the system is `a` times an isometric copy.
fn scaled_copy(bs: &BlockSystem, k: usize, pos: &[usize], dual: bool) -> Option<f64> {
    let spec = bs.small().components()[k];
    let first = &bs.blocks()[*pos.first()?];
    let a = if dual { first.mu[0] } else { first.lambda[0] };
    pos.iter().all(|&n| {
        let b = &bs.blocks()[n];
        let w = if dual { b.mu[0] } else { b.lambda[0] };
        b.host == first.host
            && bs.big().components()[b.host].kind == spec.kind
            && b.support == [bs.small().coord(n).1]
            && b.signs == [1]
            && w == a
    })
    .then_some(a)
}

fn exact_scaled(a: f64) -> Equivalence {
    let c = if a > 0.0 { (a * a).max(1.0 / (a * a)) } else { f64::INFINITY };
    Equivalence { certified_lower_c: c, heuristic_c: c, exact: true }
}

fn all_hilbert(bs: &BlockSystem, k: usize, pos: &[usize]) -> bool {
    bs.small().components()[k].kind.is_hilbert()
        && pos.iter().all(|&n| bs.big().components()[bs.blocks()[n].host].kind.is_hilbert())
        && pos.windows(2).all(|w| bs.blocks()[w[0]].host == bs.blocks()[w[1]].host)
}

/// `max(r, 1/r)`, or 1 for degenerate ratios.
fn fold_ratio(r: f64) -> f64 {
    if r > 0.0 && r.is_finite() {
        r.max(1.0 / r)
    } else {
        1.0
    }
}

/// Sample `score(a)` (a certified lower bound of `√C` per vector), keep the
/// best, then refine by coordinate moves.
fn sampled_equivalence(m: usize, samples: usize, seed: u64, score: impl Fn(&[f64]) -> f64 + Sync) -> Equivalence {
    let mut cands: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut a = vec![0.0; m];
            a[j] = 1.0;
            a
        })
        .collect();
    cands.extend((0..samples).map(|s| {
        let mut r = rng::substream(seed, s as u64);
        (0..m).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    }));
    let scored: Vec<f64> = cands.par_iter().map(|a| score(a)).collect();
    let (bi, best) = scored.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut a = cands[bi].clone();
    let mut value = best;
    let mut step = 0.5;
    while step >= 1.0 / 64.0 {
        let mut improved = false;
        for i in 0..m {
            let old = a[i];
            for cand in [old + step, old - step] {
                a[i] = cand;
                let v = score(&a);
                if v > value * (1.0 + 1e-12) {
                    value = v;
                    improved = true;
                    break;
                }
                a[i] = old;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Equivalence { certified_lower_c: best * best, heuristic_c: value * value, exact: false }
}

/// Impartial equivalence of `(x_(k,j))_j` with `(e_(k,j))_j` for small
/// component `k`: `max_a max(r, 1/r)²` with `r = ‖Σ a_j x_j‖ / ‖Σ a_j e_j‖`.
pub fn equivalence_constant(bs: &BlockSystem, k: usize, samples: usize, seed: u64) -> Result<Equivalence> {
    let pos = component_slice(bs, k)?;
    let big = bs.big();
    if let Some(a) = scaled_copy(bs, k, pos, false) {
        return Ok(exact_scaled(a));
    }
    let cols: Vec<Vec<f64>> = pos.iter().map(|&n| bs.x_coords(n)).collect();
    if all_hilbert(bs, k, pos) {
        let host = bs.blocks()[pos[0]].host;
        let rows = big.component_positions(host);
        return Ok(hilbert_equivalence(&DMatrix::from_fn(rows.len(), pos.len(), |r, c| cols[c][rows[r]])));
    }
    let small = bs.small();
    let spec = small.components()[k];
    let norms = small.haar_norms(k);
    Ok(sampled_equivalence(pos.len(), samples, seed, |a| {
        let mut x = vec![0.0; big.dim()];
        for (aj, col) in a.iter().zip(&cols) {
            x.iter_mut().zip(col).for_each(|(xi, ci)| *xi += aj * ci);
        }
        let raw: Vec<f64> = a.iter().zip(norms).map(|(aj, nj)| aj / nj).collect();
        fold_ratio(big.norm_of_coords(&x) / spec.eval_norm(&raw))
    }))
}

/// Impartial equivalence of `(x*_(k,j))_j` with `(e*_(k,j))_j`. Outside the
/// Hilbert case dual norms are only bracketed, so each ratio uses a lower
/// bound over an upper bound and the result is still a lower bound for `C`.
pub fn dual_equivalence_constant(bs: &BlockSystem, k: usize, samples: usize, seed: u64) -> Result<Equivalence> {
    let pos = component_slice(bs, k)?;
    let big = bs.big();
    if let Some(b) = scaled_copy(bs, k, pos, true) {
        return Ok(exact_scaled(b));
    }
    let rows: Vec<Vec<f64>> = pos.iter().map(|&n| bs.xstar_coords(n)).collect();
    if all_hilbert(bs, k, pos) {
        let host = bs.blocks()[pos[0]].host;
        let gp = big.component_positions(host);
        return Ok(hilbert_equivalence(&DMatrix::from_fn(gp.len(), pos.len(), |r, c| rows[c][gp[r]])));
    }
    let small = bs.small();
    let tails = vec![1usize; big.len()];
    let lower_over_upper = |a: &[f64]| -> (f64, f64) {
        let mut c = vec![0.0; big.dim()];
        for (aj, row) in a.iter().zip(&rows) {
            c.iter_mut().zip(row).for_each(|(ci, ri)| *ci += aj * ri);
        }
        let f = ZFunctional::from_coords(big, &c).expect("big shape");
        let x = restricted_dual_norm(big, &f, &tails).expect("valid tails");
        let e = component_tail_dual(small, k, a, 1);
        (x.lower / e.upper, e.lower / x.upper)
    };
    // each direction has its own certified ratio
    Ok(sampled_equivalence(pos.len(), samples, seed, |a| {
        let (r1, r2) = lower_over_upper(a);
        [r1, r2, 1.0].into_iter().filter(|r| r.is_finite()).fold(1.0, f64::max)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Violated,
    /// The bracketing bounds straddle the threshold.
    Unresolved,
}

impl Status {
    /// Status of `value < bound` given `lower <= value <= upper`.
    pub fn from_bounds(lower: f64, upper: f64, bound: f64) -> Self {
        if upper < bound {
            Status::Holds
        } else if lower >= bound {
            Status::Violated
        } else {
            Status::Unresolved
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// `i`, `ii`, `iii`, `iv`, `v`, `vi` (functional part) or `vi-dist`.
    pub cond: String,
    /// 1-based turn index; for `i`/`ii` the 0-based small component.
    pub m: usize,
    /// The measured quantity (a lower bound when not exact).
    pub sum: f64,
    /// Certified upper bound of the measured quantity; `+∞` when none is known.
    #[serde(with = "unbounded")]
    pub sum_upper: f64,
    pub bound: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub eta: f64,
    pub schedule: Vec<f64>,
    /// `Σ_m Σ_{n>m} η_n`.
    pub schedule_sum: f64,
    pub c_target: f64,
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn entries_for<'a>(&'a self, cond: &'a str) -> impl Iterator<Item = &'a LedgerEntry> + 'a {
        self.entries.iter().filter(move |e| e.cond == cond)
    }

    /// `true` when every entry of `cond` is certified to hold.
    pub fn holds(&self, cond: &str) -> bool {
        self.entries_for(cond).all(|e| e.status == Status::Holds)
    }

    pub fn violations(&self) -> usize {
        self.entries.iter().filter(|e| e.status == Status::Violated).count()
    }

    /// Largest certified lower bound of the equivalence constants.
    pub fn c_lower(&self) -> f64 {
        self.entries.iter().filter(|e| e.cond == "i" || e.cond == "ii").map(|e| e.sum).fold(1.0, f64::max)
    }
}

/// Inputs of [`verify_conditions`] beyond the operator and the blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerInput {
    pub eta: f64,
    /// `η_n` for `n = 1..=N`.
    pub schedule: Vec<f64>,
    /// Target constant for the equivalence conditions, checked against `C + η`.
    pub c_target: f64,
    /// `chain[n - 1]` holds the 1-based tail starts of `W^(n)_k` for
    /// `n = 1..=N + 1`; enables condition (vi).
    pub tail_chain: Option<Vec<Vec<usize>>>,
    pub samples: usize,
    pub seed: u64,
}

/// `Σ_m Σ_{n>m} η_n = Σ_n (n - 1) η_n`.
pub fn schedule_sum(schedule: &[f64]) -> f64 {
    schedule.iter().enumerate().map(|(i, e)| i as f64 * e).sum()
}

/// Check the hypotheses of the perturbation argument for `(x_n, x*_n)`.
///
/// Pairing conditions are exact. Dual norms outside Hilbert components are
/// bracketed, which is why an entry can be `Unresolved`. The distance of
/// `x_n` to a coordinate tail is the norm of its head, exact for
/// 1-unconditional components and an upper bound otherwise.
pub fn verify_conditions(t: &OperatorZ, bs: &BlockSystem, input: &LedgerInput) -> Result<Ledger> {
    let n_turns = bs.len();
    let LedgerInput { eta, ref schedule, c_target, ref tail_chain, samples, seed } = *input;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
    }
    if schedule.len() != n_turns || schedule.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(Error::Schedule(format!("need {n_turns} values in (0, 1]")));
    }
    let ssum = schedule_sum(schedule);
    if ssum >= eta {
        return Err(Error::Schedule(format!("Σ_m Σ_(n>m) η_n = {ssum} is not below η = {eta}")));
    }
    let m = interaction_matrix(t, bs)?;
    let mut entries = Vec::new();

    for k in 0..bs.small().len() {
        for (cond, e) in [
            ("i", equivalence_constant(bs, k, samples, seed)?),
            ("ii", dual_equivalence_constant(bs, k, samples, seed.wrapping_add(1))?),
        ] {
            let bound = c_target + eta;
            let upper = if e.exact { e.certified_lower_c } else { f64::INFINITY };
            entries.push(LedgerEntry {
                cond: cond.into(),
                m: k,
                sum: e.certified_lower_c,
                sum_upper: upper,
                bound,
                // impartial C-equivalence is a non-strict inequality
                status: if e.certified_lower_c <= bound && upper <= bound {
                    Status::Holds
                } else if e.certified_lower_c > bound {
                    Status::Violated
                } else {
                    Status::Unresolved
                },
            });
        }
    }
    for n in 0..n_turns {
        let p = bs.blocks()[n].pairing();
        let dev = (p - 1.0).abs();
        entries.push(LedgerEntry {
            cond: "iii".into(),
            m: n + 1,
            sum: p,
            sum_upper: p,
            bound: eta,
            status: if dev < eta { Status::Holds } else { Status::Violated },
        });
    }
    for r in 0..n_turns {
        let past: f64 = (0..r).map(|c| m.entry(r, c).abs()).sum();
        let future: f64 = (r + 1..n_turns).map(|c| m.entry(r, c).abs()).sum();
        for (cond, s) in [("iv", past), ("v", future)] {
            entries.push(LedgerEntry {
                cond: cond.into(),
                m: r + 1,
                sum: s,
                sum_upper: s,
                bound: schedule[r],
                status: if s < schedule[r] { Status::Holds } else { Status::Violated },
            });
        }
    }
    if let Some(chain) = tail_chain {
        if chain.len() != n_turns + 1 || chain.iter().any(|c| c.len() != bs.big().len()) {
            return Err(Error::ShapeMismatch { expected: n_turns + 1, found: chain.len() });
        }
        let big = bs.big();
        let tt = t.matrix().transpose();
        let rows: Vec<Result<[LedgerEntry; 2]>> = (0..n_turns)
            .into_par_iter()
            .map(|n| {
                let c = DVector::from_vec(bs.xstar_coords(n));
                let tstar = ZFunctional::from_coords(big, (&tt * c).as_slice())?;
                let f = restricted_dual_norm(big, &tstar, &chain[n + 1])?;
                let b = &bs.blocks()[n];
                let start = chain[n][b.host];
                let x = bs.x_coords(n);
                let head: Vec<f64> = (0..big.dim())
                    .map(|g| {
                        let (k, j) = big.coord(g);
                        if k == b.host && j < start {
                            x[g]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let d_up = big.component_norm(b.host, &head);
                let d_lo = if big.components()[b.host].kind.is_one_unconditional() { d_up } else { 0.0 };
                Ok([
                    LedgerEntry {
                        cond: "vi".into(),
                        m: n + 1,
                        sum: f.lower,
                        sum_upper: f.upper,
                        bound: schedule[n],
                        status: Status::from_bounds(f.lower, f.upper, schedule[n]),
                    },
                    LedgerEntry {
                        cond: "vi-dist".into(),
                        m: n + 1,
                        sum: d_lo,
                        sum_upper: d_up,
                        bound: schedule[n],
                        status: Status::from_bounds(d_lo, d_up, schedule[n]),
                    },
                ])
            })
            .collect();
        for r in rows {
            entries.extend(r?);
        }
    }
    Ok(Ledger { eta, schedule: schedule.clone(), schedule_sum: ssum, c_target, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Identity on a selected sub-sum `Z_Γ`.
    #[serde(rename = "sub_sum")]
    SubSum,
    /// Identity on the whole small sum.
    #[serde(rename = "full")]
    Full,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::SubSum => "sub_sum",
            Branch::Full => "full",
        }
    }
}

/// Constants that enter the target norm-product bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyParams {
    pub branch: Branch,
    pub delta: f64,
    pub eta: f64,
    /// Basis constant; 1 for the catalog spaces.
    pub lambda: f64,
    /// Diagonal factorization constant `K`.
    pub k: f64,
    /// Impartial equivalence constant used in the bound.
    pub c: f64,
    /// `‖T‖` value used by the second bound.
    pub t_norm: f64,
    /// Small components to keep; `None` keeps all.
    pub gamma: Option<BTreeSet<usize>>,
    pub norm_trials: usize,
    pub seed: u64,
}

/// `λKC²/(1 - 5λKη)` (branch with Γ) or `λKC²/(1 - 2λ√C(3+‖T‖)Kη)`; `None`
/// when the smallness condition on `η` fails.
pub fn target_bound(p: &AssemblyParams) -> Option<f64> {
    let num = p.lambda * p.k * p.c * p.c;
    let den = match p.branch {
        Branch::SubSum => 1.0 - 5.0 * p.lambda * p.k * p.eta,
        Branch::Full => 1.0 - 2.0 * p.lambda * p.c.sqrt() * (3.0 + p.t_norm) * p.k * p.eta,
    };
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertStatus {
    Ok,
    Failed,
}

/// Condition numbers above this make `Q` numerically singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest admissible entry of `B̃ T Ã - I`.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationCertificate {
    pub status: CertStatus,
    /// Stage that failed, or `done`.
    pub stage: String,
    pub message: Option<String>,
    pub branch: Branch,
    pub delta: f64,
    pub eta: f64,
    pub lambda: f64,
    #[serde(rename = "K", with = "unbounded")]
    pub k: f64,
    /// Sampled impartial equivalence constant (a lower bound, not a proof).
    #[serde(rename = "C_lower", with = "unbounded")]
    pub c_lower: f64,
    pub gamma: Vec<usize>,
    pub ledger: Option<Ledger>,
    pub residual_max: Option<f64>,
    pub condition_q: Option<f64>,
    pub a_tilde_norm_lower: Option<f64>,
    pub b_tilde_norm_lower: Option<f64>,
    pub norm_product_lower: Option<f64>,
    pub target_bound: Option<f64>,
    #[serde(rename = "A")]
    pub a: Option<OperatorZ>,
    #[serde(rename = "B")]
    pub b: Option<OperatorZ>,
    #[serde(rename = "D")]
    pub d: Option<OperatorZ>,
    #[serde(rename = "Q")]
    pub q: Option<OperatorZ>,
    pub a_tilde: Option<OperatorZ>,
    pub b_tilde: Option<OperatorZ>,
}

impl FactorizationCertificate {
    /// A certificate recording a failure at `stage`.
    pub fn failed(stage: &str, message: String, p: &AssemblyParams, ledger: Option<Ledger>) -> Self {
        Self {
            status: CertStatus::Failed,
            stage: stage.into(),
            message: Some(message),
            branch: p.branch,
            delta: p.delta,
            eta: p.eta,
            lambda: p.lambda,
            k: p.k,
            c_lower: p.c,
            gamma: p.gamma.iter().flatten().copied().collect(),
            ledger,
            residual_max: None,
            condition_q: None,
            a_tilde_norm_lower: None,
            b_tilde_norm_lower: None,
            norm_product_lower: None,
            target_bound: target_bound(p),
            a: None,
            b: None,
            d: None,
            q: None,
            a_tilde: None,
            b_tilde: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CertStatus::Ok
    }
}

fn restrict_diag(op: &OperatorZ, keep: &BTreeSet<usize>) -> Result<OperatorZ> {
    op.restrict(keep, keep)
}

/// `ι_Γ : Z_Γ → Z` as a matrix (columns are basis vectors).
fn inclusion(trunc: &ZTrunc, keep: &BTreeSet<usize>) -> Result<OperatorZ> {
    let (sub, map) = sub_trunc(trunc, keep)?;
    let mut m = DMatrix::zeros(trunc.dim(), sub.dim());
    for (c, &g) in map.iter().enumerate() {
        m[(g, c)] = 1.0;
    }
    OperatorZ::new(sub, trunc.clone(), m)
}

/// Assemble `Q = B̂ B T A Â`, `Ã = A Â`, `B̃ = Q^{-1} B̂ B` on the selected
/// components and verify `B̃ T Ã = I`.
///
/// A failed smallness condition on `η` only drops the target bound: the
/// inverse is computed directly and the residual is the ground truth.
pub fn assemble_factorization(
    t: &OperatorZ,
    bs: &BlockSystem,
    factors: &DiagonalFactors,
    ledger: Option<Ledger>,
    p: &AssemblyParams,
) -> FactorizationCertificate {
    match assemble_inner(t, bs, factors, &ledger, p) {
        Ok(mut cert) => {
            cert.ledger = ledger;
            cert
        }
        Err((stage, e)) => FactorizationCertificate::failed(stage, e.to_string(), p, ledger),
    }
}

type Staged<T> = std::result::Result<T, (&'static str, Error)>;

fn assemble_inner(
    t: &OperatorZ,
    bs: &BlockSystem,
    factors: &DiagonalFactors,
    ledger: &Option<Ledger>,
    p: &AssemblyParams,
) -> Staged<FactorizationCertificate> {
    let at = |stage: &'static str| move |e: Error| (stage, e);
    let small = bs.small();
    let d = build_d(t, bs).map_err(at("build_d"))?;
    let a = build_a(small, bs.big(), bs).map_err(at("build_a"))?;
    let b = build_b(bs.big(), small, bs).map_err(at("build_b"))?;

    // I = B̂ D Â on the full small sum
    let check = factors.b.compose(&d).and_then(|x| x.compose(&factors.a)).map_err(at("diagonal_check"))?;
    let dev = check.sub(&OperatorZ::identity(small)).map_err(at("diagonal_check"))?.max_abs();
    if !is_diagonal(&factors.a) || !is_diagonal(&factors.b) || dev > 1e-10 {
        return Err(("diagonal_check", Error::Precondition(format!("‖B̂DÂ - I‖_max = {dev:e}"))));
    }

    let keep: BTreeSet<usize> = p.gamma.clone().unwrap_or_else(|| (0..small.len()).collect());
    let iota = inclusion(small, &keep).map_err(at("restrict"))?;
    let proj = OperatorZ::new(small.clone(), iota.domain().clone(), iota.matrix().transpose()).map_err(at("restrict"))?;
    let a_hat = restrict_diag(&factors.a, &keep).map_err(at("restrict"))?;
    let b_hat = restrict_diag(&factors.b, &keep).map_err(at("restrict"))?;

    let a_tilde = a.compose(&iota).and_then(|x| x.compose(&a_hat)).map_err(at("assemble"))?;
    let bb = b_hat.compose(&proj).and_then(|x| x.compose(&b)).map_err(at("assemble"))?;
    let q = bb.compose(t).and_then(|x| x.compose(&a_tilde)).map_err(at("assemble"))?;

    let sv = q.matrix().clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(("invert_q", Error::Singular(format!("condition number {cond:e}"))));
    }
    let q_inv = q
        .matrix()
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| ("invert_q", Error::Singular("LU inverse failed".into())))?;
    let q_inv = OperatorZ::new(q.codomain().clone(), q.domain().clone(), q_inv).map_err(at("invert_q"))?;
    let b_tilde = q_inv.compose(&bb).map_err(at("assemble"))?;

    let prod = b_tilde.compose(t).and_then(|x| x.compose(&a_tilde)).map_err(at("verify"))?;
    let residual = prod.sub(&OperatorZ::identity(prod.domain())).map_err(at("verify"))?.max_abs();

    let na = operator_norm_bounds(&a_tilde, p.norm_trials, p.seed).map_err(at("norms"))?.certified_lower;
    let nb = operator_norm_bounds(&b_tilde, p.norm_trials, p.seed.wrapping_add(1)).map_err(at("norms"))?.certified_lower;

    let ok = residual <= RESIDUAL_TOL;
    let mut cert = FactorizationCertificate::failed("verify", String::new(), p, ledger.clone());
    cert.status = if ok { CertStatus::Ok } else { CertStatus::Failed };
    cert.stage = if ok { "done".into() } else { "verify".into() };
    cert.message = (!ok).then(|| format!("residual {residual:e} exceeds {RESIDUAL_TOL:e}"));
    cert.gamma = keep.into_iter().collect();
    cert.residual_max = Some(residual);
    cert.condition_q = Some(cond);
    cert.a_tilde_norm_lower = Some(na);
    cert.b_tilde_norm_lower = Some(nb);
    cert.norm_product_lower = Some(na * nb);
    cert.a = Some(a);
    cert.b = Some(b);
    cert.d = Some(d);
    cert.q = Some(q);
    cert.a_tilde = Some(a_tilde);
    cert.b_tilde = Some(b_tilde);
    Ok(cert)
}
