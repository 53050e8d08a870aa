//! Block sequences, lower/upper `r`-estimates, curvature profiles and tail
//! bounds for functionals.
//!
//! A block sequence here is a list of expansions whose Haar spectra are
//! nonempty, pairwise disjoint and successive in the fixed index order.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::HaarIndex;
use crate::error::{Error, Result};
use crate::funcspace::{HaarExpansion, SpaceKind, SpaceSpec};
use crate::rng;
use crate::sumspace::{component_tail_dual, component_tail_upper, DualNormBounds, ZFunctional, ZTrunc};

/// Margins below `-MARGIN_TOL` count as violations; everything above is
/// floating-point noise around equality.
pub const MARGIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockSequenceRepr", into = "BlockSequenceRepr")]
pub struct BlockSequence {
    host: SpaceSpec,
    blocks: Vec<HaarExpansion>,
    /// 0-based `(first, last)` slot of each block's spectrum.
    spans: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct BlockSequenceRepr {
    host: SpaceSpec,
    blocks: Vec<HaarExpansion>,
}

impl TryFrom<BlockSequenceRepr> for BlockSequence {
    type Error = Error;
    fn try_from(r: BlockSequenceRepr) -> Result<Self> {
        BlockSequence::new(r.host, r.blocks)
    }
}

impl From<BlockSequence> for BlockSequenceRepr {
    fn from(b: BlockSequence) -> Self {
        BlockSequenceRepr { host: b.host, blocks: b.blocks }
    }
}

impl BlockSequence {
    pub fn new(host: SpaceSpec, blocks: Vec<HaarExpansion>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("a block sequence needs at least one block".into()));
        }
        let mut spans = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            if b.dim() != host.dim() || b.depth() != host.depth {
                return Err(Error::DimensionMismatch(format!("block {i} does not live in {}", host.kind.label())));
            }
            let c = b.coeffs();
            let first = c.iter().position(|v| *v != 0.0);
            let last = c.iter().rposition(|v| *v != 0.0);
            let (Some(first), Some(last)) = (first, last) else {
                return Err(Error::InvalidArgument(format!("block {i} is zero")));
            };
            if let Some(&(_, prev)) = spans.last() {
                if first <= prev {
                    return Err(Error::InvalidArgument(format!(
                        "block {i} starts at ordinal {} but block {} ends at {}",
                        first + 1,
                        i - 1,
                        prev + 1
                    )));
                }
            }
            spans.push((first, last));
        }
        Ok(Self { host, blocks, spans })
    }

    pub fn host(&self) -> &SpaceSpec {
        &self.host
    }

    pub fn blocks(&self) -> &[HaarExpansion] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// 1-based ordinals `(first, last)` bounding the spectrum of block `i`.
    pub fn span(&self, i: usize) -> (usize, usize) {
        let (a, b) = self.spans[i];
        (a + 1, b + 1)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| self.host.eval_norm(b.coeffs())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `‖Σ f_j‖ <= c (Σ ‖f_j‖^r)^{1/r}`
    Upper,
    /// `(Σ ‖f_j‖^r)^{1/r} <= c ‖Σ f_j‖`
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub n: usize,
    pub value: f64,
    /// `None` when no bound applies (reported as an empty CSV field).
    pub bound: Option<f64>,
    pub margin: Option<f64>,
}

fn rows_csv(rows: &[Row]) -> String {
    let mut out = String::from("n,value,bound,margin\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(out, "{},{:e},{},{}", r.n, r.value, opt(r.bound), opt(r.margin));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub direction: Direction,
    pub r: f64,
    pub c: f64,
    /// One row per prefix `n`. For the upper estimate `value = ‖Σ_{j<=n} f_j‖`
    /// and `bound = c (Σ ‖f_j‖^r)^{1/r}`; for the lower estimate the bound is
    /// `(Σ ‖f_j‖^r)^{1/r} / c`. Margins are signed so that negative is bad.
    pub rows: Vec<Row>,
    pub worst_margin: f64,
    pub worst_prefix: usize,
    /// Worst prefix, if its margin is below `-MARGIN_TOL`.
    pub violation: Option<usize>,
}

impl EstimateReport {
    pub fn to_csv(&self) -> String {
        rows_csv(&self.rows)
    }
}

fn lr_norm(v: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        v.iter().fold(0.0, |a, x| a.max(*x))
    } else {
        v.iter().map(|x| x.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

pub fn check_block_estimate(seq: &BlockSequence, direction: Direction, r: f64, c: f64) -> Result<EstimateReport> {
    if !(r >= 1.0) {
        return Err(Error::BadExponent(r));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("constant must be positive, got {c}")));
    }
    let norms = seq.norms();
    let mut acc = vec![0.0; seq.host.dimension()];
    let mut rows = Vec::with_capacity(seq.len());
    for (i, b) in seq.blocks.iter().enumerate() {
        let (lo, hi) = seq.spans[i];
        acc[lo..=hi].copy_from_slice(&b.coeffs()[lo..=hi]);
        let value = seq.host.eval_norm(&acc);
        let lr = lr_norm(&norms[..=i], r);
        let (bound, margin) = match direction {
            Direction::Upper => (c * lr, c * lr - value),
            Direction::Lower => (lr / c, value - lr / c),
        };
        rows.push(Row { n: i + 1, value, bound: Some(bound), margin: Some(margin) });
    }
    let (worst_prefix, worst_margin) = rows
        .iter()
        .map(|r| (r.n, r.margin.expect("set above")))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(EstimateReport {
        direction,
        r,
        c,
        rows,
        worst_margin,
        worst_prefix,
        violation: (worst_margin < -MARGIN_TOL).then_some(worst_prefix),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Random signs, unit modulus.
    Flat,
    /// Independent standard normal coefficients.
    Gaussian,
    /// One coefficient 1 at a random slot, the rest small normal noise.
    Spike,
}

/// Shape of a random block sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRecipe {
    pub count: usize,
    /// Haar indices per block; blocks are adjacent, starting at ordinal 1.
    pub width: usize,
    pub profile: Profile,
    pub normalize: bool,
}

pub fn random_blocks(spec: &SpaceSpec, recipe: &BlockRecipe, seed: u64) -> Result<BlockSequence> {
    let BlockRecipe { count, width, profile, normalize } = *recipe;
    if count == 0 || width == 0 {
        return Err(Error::InvalidArgument("count and width must be positive".into()));
    }
    let dim = spec.dimension();
    if count.saturating_mul(width) > dim {
        return Err(Error::Capacity(format!("{count} blocks of width {width} need {} indices, {dim} available", count * width)));
    }
    let mut r = rng::seeded(seed);
    let mut blocks = Vec::with_capacity(count);
    for i in 0..count {
        let mut c = vec![0.0; dim];
        let slots = &mut c[i * width..(i + 1) * width];
        match profile {
            Profile::Flat => slots.iter_mut().for_each(|v| *v = if r.random_bool(0.5) { 1.0 } else { -1.0 }),
            Profile::Gaussian => slots.iter_mut().for_each(|v| *v = r.sample(StandardNormal)),
            Profile::Spike => {
                slots.iter_mut().for_each(|v| *v = 0.01 * r.sample::<f64, _>(StandardNormal));
                let at = r.random_range(0..width);
                slots[at] = 1.0;
            }
        }
        // a Gaussian draw of exactly zero everywhere is not a block; nudge it
        if slots.iter().all(|v| *v == 0.0) {
            slots[0] = 1.0;
        }
        if normalize {
            let n = spec.eval_norm(&c);
            c.iter_mut().for_each(|v| *v /= n);
        }
        blocks.push(HaarExpansion::from_coeffs(spec.dim(), spec.depth, c)?);
    }
    BlockSequence::new(*spec, blocks)
}

/// Index groups sharing a level (1D) or a level pair (2D). Each group is a
/// consecutive run in the fixed order and its supports tile the unit cube.
fn level_groups(spec: &SpaceSpec) -> Vec<std::ops::Range<usize>> {
    let key = |i: &HaarIndex| match i {
        HaarIndex::One(d) => (d.level, 0),
        HaarIndex::Two(r) => (r.x.level, r.y.level),
    };
    let idx = spec.indices();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=idx.len() {
        if i == idx.len() || key(&idx[i]) != key(&idx[start]) {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// The `s` for which blocks in `kind` satisfy the upper `s`-estimate with
/// constant one, when known.
pub fn upper_exponent(kind: &SpaceKind) -> Option<f64> {
    match *kind {
        SpaceKind::Hp { p } => Some(p.min(2.0)),
        SpaceKind::HpHq { p, q } => Some(p.min(q).min(2.0)),
        k if k.is_hilbert() => Some(2.0),
        _ => None,
    }
}

/// The lower-estimate exponent `max(2, p, q)` for square-function spaces.
pub fn lower_exponent(kind: &SpaceKind) -> Option<f64> {
    match *kind {
        SpaceKind::Hp { p } => Some(p.max(2.0)),
        SpaceKind::HpHq { p, q } => Some(p.max(q).max(2.0)),
        k if k.is_hilbert() => Some(2.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTable {
    /// `value` is the largest sampled `‖(1/n) Σ_{j<=n} x_j‖`, a lower envelope
    /// of the true supremum. `bound` is `max_k n^{1/s_k - 1}` when every
    /// component has a known upper exponent.
    pub rows: Vec<Row>,
    /// Fitted `α` in `value ≈ n^{-α}` (least squares in log-log scale).
    pub exponent: f64,
    pub samples: usize,
    pub seed: u64,
}

impl CurvatureTable {
    pub fn to_csv(&self) -> String {
        rows_csv(&self.rows)
    }
}

/// Norm of the average of `n` blocks, each a normalized constant-coefficient
/// run over the given index ranges.
fn average_of_runs(spec: &SpaceSpec, runs: &[std::ops::Range<usize>]) -> f64 {
    let mut acc = vec![0.0; spec.dimension()];
    let mut c = vec![0.0; spec.dimension()];
    for run in runs {
        c[run.clone()].iter_mut().for_each(|v| *v = 1.0);
        let norm = spec.eval_norm(&c);
        for i in run.clone() {
            acc[i] = 1.0 / norm;
            c[i] = 0.0;
        }
    }
    spec.eval_norm(&acc) / runs.len() as f64
}

/// `n` single Haar functions with disjoint supports, inside the first level
/// group large enough.
fn disjoint_runs(groups: &[std::ops::Range<usize>], n: usize) -> Option<Vec<std::ops::Range<usize>>> {
    let g = groups.iter().find(|g| g.len() >= n)?;
    Some((0..n).map(|i| g.start + i..g.start + i + 1).collect())
}

/// `n` blocks stacked over as many level groups as possible: group `g` is cut
/// into `c_g` contiguous pieces with `Σ c_g = n`, as evenly as capacity allows.
fn stacked_runs(groups: &[std::ops::Range<usize>], n: usize) -> Option<Vec<std::ops::Range<usize>>> {
    let total: usize = groups.iter().map(|g| g.len()).sum();
    if total < n {
        return None;
    }
    let used = n.min(groups.len());
    let mut pieces = vec![0usize; used];
    let mut left = n;
    // fill round-robin, skipping groups that are full
    while left > 0 {
        let mut moved = false;
        for (p, g) in pieces.iter_mut().zip(groups) {
            if left > 0 && *p < g.len() {
                *p += 1;
                left -= 1;
                moved = true;
            }
        }
        if !moved {
            return None;
        }
    }
    let mut runs = Vec::with_capacity(n);
    for (g, &p) in groups.iter().zip(&pieces) {
        let len = g.len();
        for i in 0..p {
            runs.push(g.start + i * len / p..g.start + (i + 1) * len / p);
        }
    }
    Some(runs)
}

fn loglog_slope(rows: &[Row]) -> f64 {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.value > 0.0).map(|r| ((r.n as f64).ln(), r.value.ln())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sampled decay of normalized block averages, as a supremum over the
/// components of `array`, two deterministic block shapes (disjoint supports
/// and stacked levels) and `samples` random Gaussian block sequences.
pub fn curvature_profile(array: &ZTrunc, n_max: usize, samples: usize, seed: u64) -> Result<CurvatureTable> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be positive".into()));
    }
    let groups: Vec<Vec<std::ops::Range<usize>>> = array.components().iter().map(level_groups).collect();
    for (k, g) in groups.iter().enumerate() {
        if !g.iter().any(|g| g.len() >= n_max) {
            return Err(Error::Capacity(format!(
                "component {k} has no level with {n_max} disjoint Haar functions; increase its depth"
            )));
        }
    }
    // tasks: (component, None) for the deterministic shapes, (component, Some(s)) for samples
    let tasks: Vec<(usize, Option<usize>)> =
        (0..array.len()).flat_map(|k| std::iter::once((k, None)).chain((0..samples).map(move |s| (k, Some(s))))).collect();
    let columns: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(k, sample)| {
            let spec = &array.components()[k];
            match sample {
                None => (1..=n_max)
                    .map(|n| {
                        let d = disjoint_runs(&groups[k], n).map_or(0.0, |r| average_of_runs(spec, &r));
                        let s = stacked_runs(&groups[k], n).map_or(0.0, |r| average_of_runs(spec, &r));
                        d.max(s)
                    })
                    .collect(),
                Some(s) => {
                    let width = (spec.dimension() / n_max).max(1);
                    let recipe = BlockRecipe { count: n_max, width, profile: Profile::Gaussian, normalize: true };
                    let sub = rng::substream(seed, (k * samples + s) as u64).random::<u64>();
                    let seq = random_blocks(spec, &recipe, sub).expect("capacity checked");
                    let mut acc = vec![0.0; spec.dimension()];
                    (0..n_max)
                        .map(|i| {
                            let (lo, hi) = seq.spans[i];
                            acc[lo..=hi].copy_from_slice(&seq.blocks[i].coeffs()[lo..=hi]);
                            spec.eval_norm(&acc) / (i + 1) as f64
                        })
                        .collect()
                }
            }
        })
        .collect();
    let exps: Option<Vec<f64>> = array.components().iter().map(|s| upper_exponent(&s.kind)).collect();
    let rows: Vec<Row> = (0..n_max)
        .map(|i| {
            let n = i + 1;
            let value = columns.iter().map(|c| c[i]).fold(0.0, f64::max);
            let bound = exps.as_ref().map(|e| e.iter().map(|s| (n as f64).powf(1.0 / s - 1.0)).fold(0.0, f64::max));
            Row { n, value, bound, margin: bound.map(|b| b - value) }
        })
        .collect();
    let exponent = -loglog_slope(&rows);
    Ok(CurvatureTable { rows, exponent, samples, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    /// 1-based tail starts `m_k`; `dim_k + 1` means the whole component is cut.
    pub m: Vec<usize>,
    /// Restricted dual norm at `m`; `upper <= η`.
    pub bounds: DualNormBounds,
}

/// Tail starts `(m_k)` with `‖z*|_{ℓ∞([e_(k,j) : j >= m_k])}‖ <= η`.
///
/// Greedy: while the certified upper bound exceeds `η`, the component with
/// the largest contribution advances its tail by one. The move sequence does
/// not depend on `η`, so a smaller `η` never yields smaller `m_k`.
pub fn tail_profile(trunc: &ZTrunc, f: &ZFunctional, eta: f64) -> Result<TailProfile> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let full = f.to_coords(trunc);
    if full.len() != trunc.dim() {
        return Err(Error::ShapeMismatch { expected: trunc.dim(), found: full.len() });
    }
    let mut m = vec![1usize; trunc.len()];
    // the stopping rule only needs the upper bounds; lower bounds cost a norm
    // evaluation and are computed once at the end
    let mut parts: Vec<f64> = (0..trunc.len()).map(|k| component_tail_upper(trunc, k, &f.parts[k], 1)).collect();
    loop {
        let upper: f64 = parts.iter().sum();
        if upper <= eta {
            let lower = (0..trunc.len()).map(|k| component_tail_dual(trunc, k, &f.parts[k], m[k]).lower).sum();
            return Ok(TailProfile { m, bounds: DualNormBounds { lower, upper } });
        }
        let k = (0..trunc.len())
            .filter(|&k| m[k] <= trunc.component_dim(k))
            .fold(None::<usize>, |best, k| match best {
                Some(b) if parts[b] >= parts[k] => Some(b),
                _ => Some(k),
            })
            .expect("positive upper bound implies an uncut component");
        m[k] += 1;
        parts[k] = component_tail_upper(trunc, k, &f.parts[k], m[k]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{DyadicInterval, HaarDim};
    use crate::funcspace::norm;
    use proptest::prelude::*;

    fn h(level: u32, pos: u64) -> HaarIndex {
        HaarIndex::One(DyadicInterval::new(level, pos).unwrap())
    }

    #[test]
    fn halves_in_h2_are_pythagorean() {
        let spec = SpaceSpec::hp(2.0, 2).unwrap();
        let f1 = HaarExpansion::single(HaarDim::OneParam, 2, h(1, 0)).unwrap();
        let f2 = HaarExpansion::single(HaarDim::OneParam, 2, h(1, 1)).unwrap();
        let seq = BlockSequence::new(spec, vec![f1.clone(), f2.clone()]).unwrap();
        let rep = check_block_estimate(&seq, Direction::Upper, 2.0, 1.0).unwrap();
        // oracle: direct norms
        let mut sum = f1.clone();
        sum.axpy(1.0, &f2).unwrap();
        let lhs = norm(&spec, &sum).unwrap();
        let rhs = (norm(&spec, &f1).unwrap().powi(2) + norm(&spec, &f2).unwrap().powi(2)).sqrt();
        assert!((lhs - rhs).abs() < 1e-15);
        assert!(rep.worst_margin.abs() < 1e-15);
        assert_eq!(rep.violation, None);
        let low = check_block_estimate(&seq, Direction::Lower, 2.0, 1.0).unwrap();
        assert!(low.worst_margin.abs() < 1e-15);
    }

    #[test]
    fn single_block_has_zero_margin() {
        let spec = SpaceSpec::new(SpaceKind::HpHq { p: 1.5, q: 3.0 }, 2).unwrap();
        let seq = random_blocks(&spec, &BlockRecipe { count: 1, width: 5, profile: Profile::Gaussian, normalize: false }, 4)
            .unwrap();
        for d in [Direction::Upper, Direction::Lower] {
            for r in [1.0, 2.0, 3.5, f64::INFINITY] {
                assert!(check_block_estimate(&seq, d, r, 1.0).unwrap().worst_margin.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crafted_violation_is_reported() {
        // in H^1, disjoint halves add up exactly, so the upper 2-estimate fails
        let spec = SpaceSpec::hp(1.0, 3).unwrap();
        let blocks = (0..4).map(|p| HaarExpansion::single(HaarDim::OneParam, 3, h(2, p)).unwrap()).collect();
        let seq = BlockSequence::new(spec, blocks).unwrap();
        let rep = check_block_estimate(&seq, Direction::Upper, 2.0, 1.0).unwrap();
        assert_eq!(rep.violation, Some(4));
        assert!((rep.rows[3].value - 1.0).abs() < 1e-15);
        assert!((rep.rows[3].bound.unwrap() - 0.5).abs() < 1e-15);
        assert!(rep.to_csv().starts_with("n,value,bound,margin\n"));
        assert_eq!(rep.to_csv().lines().count(), 5);
    }

    #[test]
    fn invalid_sequences_rejected() {
        let spec = SpaceSpec::hp(2.0, 2).unwrap();
        let a = HaarExpansion::single(HaarDim::OneParam, 2, h(1, 1)).unwrap();
        let b = HaarExpansion::single(HaarDim::OneParam, 2, h(1, 0)).unwrap();
        assert!(BlockSequence::new(spec, vec![]).is_err());
        assert!(BlockSequence::new(spec, vec![a.clone(), b]).is_err());
        assert!(BlockSequence::new(spec, vec![a.clone(), a.clone()]).is_err());
        assert!(BlockSequence::new(spec, vec![HaarExpansion::zeros(HaarDim::OneParam, 2).unwrap()]).is_err());
        let seq = BlockSequence::new(spec, vec![a]).unwrap();
        assert!(check_block_estimate(&seq, Direction::Upper, 0.5, 1.0).is_err());
        assert!(check_block_estimate(&seq, Direction::Upper, 2.0, 0.0).is_err());
    }

    #[test]
    fn random_blocks_shape() {
        let spec = SpaceSpec::hp(3.0, 4).unwrap();
        let rec = BlockRecipe { count: 6, width: 5, profile: Profile::Spike, normalize: true };
        let seq = random_blocks(&spec, &rec, 11).unwrap();
        assert_eq!(seq.len(), 6);
        // disjointness oracle on explicit supports
        let supports: Vec<Vec<usize>> = seq
            .blocks()
            .iter()
            .map(|b| b.coeffs().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect())
            .collect();
        for i in 0..supports.len() {
            for j in i + 1..supports.len() {
                assert!(supports[i].iter().all(|s| !supports[j].contains(s)));
            }
        }
        for n in seq.norms() {
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(random_blocks(&spec, &rec, 11).unwrap(), seq);
        let single = random_blocks(&spec, &BlockRecipe { count: 1, ..rec }, 1).unwrap();
        assert_eq!(single.len(), 1);
        let too_many = BlockRecipe { count: 7, width: 5, ..rec };
        assert!(matches!(random_blocks(&spec, &too_many, 0), Err(Error::Capacity(_))));
    }

    #[test]
    fn block_sequence_serde_round_trip() {
        let spec = SpaceSpec::new(SpaceKind::HpHq { p: 2.0, q: 3.0 }, 1).unwrap();
        let seq = random_blocks(&spec, &BlockRecipe { count: 3, width: 2, profile: Profile::Flat, normalize: false }, 2)
            .unwrap();
        let s = serde_json::to_string(&seq).unwrap();
        let back: BlockSequence = serde_json::from_str(&s).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn curvature_in_h2_is_exact() {
        let t = ZTrunc::new(vec![SpaceSpec::hp(2.0, 6).unwrap()]).unwrap();
        let tab = curvature_profile(&t, 16, 3, 5).unwrap();
        for r in &tab.rows {
            let want = (r.n as f64).powf(-0.5);
            assert!((r.value - want).abs() < 1e-12, "n={} {} vs {want}", r.n, r.value);
            assert!(r.margin.unwrap() > -1e-12);
        }
        assert!((tab.exponent - 0.5).abs() < 1e-9);
        assert!((tab.rows[0].value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_below_two_matches_disjoint_supports() {
        let t = ZTrunc::new(vec![SpaceSpec::hp(1.5, 6).unwrap()]).unwrap();
        let tab = curvature_profile(&t, 32, 2, 1).unwrap();
        for r in &tab.rows {
            // disjoint normalized blocks give exactly n^{1/p - 1}, the bound
            assert!((r.value - r.bound.unwrap()).abs() < 1e-12);
        }
        assert!((tab.exponent - (1.0 - 1.0 / 1.5)).abs() < 1e-9);
    }

    #[test]
    fn curvature_capacity_checked() {
        let t = ZTrunc::new(vec![SpaceSpec::hp(2.0, 3).unwrap()]).unwrap();
        assert!(matches!(curvature_profile(&t, 9, 1, 0), Err(Error::Capacity(_))));
        assert!(curvature_profile(&t, 8, 1, 0).is_ok());
    }

    #[test]
    fn curvature_is_deterministic() {
        let t = ZTrunc::new(vec![SpaceSpec::hp(3.0, 5).unwrap(), SpaceSpec::hp(1.5, 5).unwrap()]).unwrap();
        let a = curvature_profile(&t, 12, 3, 9).unwrap();
        let b = curvature_profile(&t, 12, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    fn tails_trunc() -> ZTrunc {
        ZTrunc::new(vec![
            SpaceSpec::hp(3.0, 2).unwrap(),
            SpaceSpec::hp(2.0, 2).unwrap(),
            SpaceSpec::new(SpaceKind::HpHq { p: 1.5, q: 3.0 }, 1).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn single_coordinate_tail() {
        let t = tails_trunc();
        for k in 0..3 {
            let f = ZFunctional::coordinate(&t, k, 1).unwrap();
            let tp = tail_profile(&t, &f, 0.5).unwrap();
            let want: Vec<usize> = (0..3).map(|i| if i == k { 2 } else { 1 }).collect();
            assert_eq!(tp.m, want);
            assert_eq!(tp.bounds.upper, 0.0);
        }
        let f = ZFunctional::coordinate(&t, 2, 1).unwrap();
        assert_eq!(tail_profile(&t, &f, 1.5).unwrap().m, vec![1, 1, 1]);
        assert!(tail_profile(&t, &f, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn tail_profile_is_monotone_and_sound(seed in 0u64..1000, e1 in 0.01f64..3.0, e2 in 0.01f64..3.0) {
            let t = tails_trunc();
            let mut r = rng::seeded(seed);
            let c: Vec<f64> = (0..t.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
            let f = ZFunctional::from_coords(&t, &c).unwrap();
            let (small, big) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let a = tail_profile(&t, &f, small).unwrap();
            let b = tail_profile(&t, &f, big).unwrap();
            prop_assert!(a.m.iter().zip(&b.m).all(|(x, y)| x >= y));
            // oracle: restricted_dual_norm at the returned tails
            let check = crate::sumspace::restricted_dual_norm(&t, &f, &a.m).unwrap();
            prop_assert!(check.upper <= small);
            prop_assert_eq!(check, a.bounds);
        }

        #[test]
        fn r_estimates_hold_in_mixed_norms(
            seed in 0u64..10_000,
            p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
            q in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
            width in 1usize..6,
            count in 1usize..12,
        ) {
            let kind = SpaceKind::HpHq { p, q };
            let spec = SpaceSpec::new(kind, 3).unwrap();
            let rec = BlockRecipe { count, width, profile: Profile::Gaussian, normalize: false };
            let seq = random_blocks(&spec, &rec, seed).unwrap();
            let lo = check_block_estimate(&seq, Direction::Lower, lower_exponent(&kind).unwrap(), 1.0).unwrap();
            let up = check_block_estimate(&seq, Direction::Upper, upper_exponent(&kind).unwrap(), 1.0).unwrap();
            prop_assert!(lo.worst_margin >= -MARGIN_TOL);
            prop_assert!(up.worst_margin >= -MARGIN_TOL);
        }

        #[test]
        fn h2_dual_and_primal_estimates_coincide(seed in 0u64..10_000, count in 1usize..8) {
            // H² is self-dual with the Haar system orthogonal: blocks satisfy
            // both the lower and upper 2-estimate with constant one
            let spec = SpaceSpec::hp(2.0, 4).unwrap();
            let rec = BlockRecipe { count, width: 3, profile: Profile::Gaussian, normalize: false };
            let seq = random_blocks(&spec, &rec, seed).unwrap();
            for d in [Direction::Lower, Direction::Upper] {
                prop_assert!(check_block_estimate(&seq, d, 2.0, 1.0).unwrap().worst_margin.abs() < 1e-9);
            }
        }
    }
}
