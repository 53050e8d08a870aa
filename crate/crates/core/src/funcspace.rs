//! Finite Haar expansions and exact norm evaluation.
//!
//! Every function handled here is a dyadic step function, so all integrals
//! are finite sums over grid cells. One-parameter expansions of depth `d` are
//! evaluated on `2^(d+1)` cells, two-parameter ones on `2^(d+1) x 2^(d+1)`
//! cells (x-major).

use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::dyadic::{space_index_order, DyadicInterval, HaarDim, HaarIndex};
use crate::error::{Error, Result};

/// The space families of the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SpaceKind {
    Lp { p: f64 },
    Hp { p: f64 },
    #[serde(rename = "VMO")]
    Vmo,
    HpHq { p: f64, q: f64 },
    #[serde(rename = "VMOHr")]
    VmoHr { r: f64 },
    LrLs { r: f64, s: f64 },
}

impl SpaceKind {
    pub fn dim(&self) -> HaarDim {
        match self {
            SpaceKind::Lp { .. } | SpaceKind::Hp { .. } | SpaceKind::Vmo => HaarDim::OneParam,
            _ => HaarDim::TwoParam,
        }
    }

    fn exponents(&self) -> Vec<f64> {
        match *self {
            SpaceKind::Lp { p } | SpaceKind::Hp { p } => vec![p],
            SpaceKind::Vmo => vec![],
            SpaceKind::HpHq { p, q } => vec![p, q],
            SpaceKind::VmoHr { r } => vec![r],
            SpaceKind::LrLs { r, s } => vec![r, s],
        }
    }

    /// Whether the normalized Haar system is a 1-unconditional basis, so
    /// that sign changes of coefficients are isometries.
    pub fn is_one_unconditional(&self) -> bool {
        match *self {
            SpaceKind::Hp { .. } | SpaceKind::Vmo | SpaceKind::HpHq { .. } => true,
            SpaceKind::Lp { p } => p == 2.0,
            SpaceKind::LrLs { r, s } => r == 2.0 && s == 2.0,
            SpaceKind::VmoHr { .. } => false,
        }
    }

    /// Whether the normalized Haar system is orthonormal for this norm.
    pub fn is_hilbert(&self) -> bool {
        match *self {
            SpaceKind::Lp { p } | SpaceKind::Hp { p } => p == 2.0,
            SpaceKind::HpHq { p, q } => p == 2.0 && q == 2.0,
            SpaceKind::LrLs { r, s } => r == 2.0 && s == 2.0,
            SpaceKind::Vmo | SpaceKind::VmoHr { .. } => false,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SpaceKind::Lp { p } => format!("L^{p}"),
            SpaceKind::Hp { p } => format!("H^{p}"),
            SpaceKind::Vmo => "VMO".into(),
            SpaceKind::HpHq { p, q } => format!("H^{p}(H^{q})"),
            SpaceKind::VmoHr { r } => format!("VMO(H^{r})"),
            SpaceKind::LrLs { r, s } => format!("L^{r}(L^{s})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceSpecRepr {
    #[serde(flatten)]
    kind: SpaceKind,
    depth: u32,
}

/// A catalog space truncated to Haar levels `<= depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceSpecRepr", into = "SpaceSpecRepr")]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    pub depth: u32,
}

impl TryFrom<SpaceSpecRepr> for SpaceSpec {
    type Error = Error;
    fn try_from(r: SpaceSpecRepr) -> Result<Self> {
        SpaceSpec::new(r.kind, r.depth)
    }
}

impl From<SpaceSpec> for SpaceSpecRepr {
    fn from(s: SpaceSpec) -> Self {
        SpaceSpecRepr { kind: s.kind, depth: s.depth }
    }
}

impl SpaceSpec {
    pub fn new(kind: SpaceKind, depth: u32) -> Result<Self> {
        for e in kind.exponents() {
            if !e.is_finite() || e < 1.0 {
                return Err(Error::BadExponent(e));
            }
        }
        if depth > kind.dim().max_depth() {
            return Err(Error::DepthTooLarge(depth));
        }
        Ok(Self { kind, depth })
    }

    pub fn hp(p: f64, depth: u32) -> Result<Self> {
        Self::new(SpaceKind::Hp { p }, depth)
    }

    pub fn dim(&self) -> HaarDim {
        self.kind.dim()
    }

    /// Number of Haar functions in the truncation.
    pub fn dimension(&self) -> usize {
        self.dim().dimension(self.depth)
    }

    pub fn indices(&self) -> Vec<HaarIndex> {
        space_index_order(self.dim(), self.depth).expect("depth validated at construction")
    }

    /// Norm of the L^∞-normalized Haar function `h_idx`.
    pub fn haar_norm(&self, idx: &HaarIndex) -> f64 {
        match (self.kind, idx) {
            (SpaceKind::Lp { p } | SpaceKind::Hp { p }, HaarIndex::One(i)) => i.measure().powf(1.0 / p),
            (SpaceKind::Vmo, HaarIndex::One(_)) => 1.0,
            (SpaceKind::HpHq { p: a, q: b } | SpaceKind::LrLs { r: a, s: b }, HaarIndex::Two(r)) => {
                r.x.measure().powf(1.0 / a) * r.y.measure().powf(1.0 / b)
            }
            (SpaceKind::VmoHr { r }, HaarIndex::Two(rect)) => rect.y.measure().powf(1.0 / r),
            _ => f64::NAN,
        }
    }

    /// Norms of all basis functions in the fixed order.
    pub fn haar_norms(&self) -> Vec<f64> {
        self.indices().iter().map(|i| self.haar_norm(i)).collect()
    }

    /// Norm of the expansion whose coefficients (in the fixed order, at this
    /// spec's depth) are `a`.
    ///
    /// # Panics
    /// If `a.len()` differs from [`SpaceSpec::dimension`].
    pub fn eval_norm(&self, a: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dimension(), "coefficient vector has the wrong length");
        eval_norm(self.kind, self.depth, a)
    }
}

/// A function `Σ a_I h_I` with every level `<= depth`, stored densely in the
/// fixed index order.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarExpansion {
    dim: HaarDim,
    depth: u32,
    coeffs: Vec<f64>,
}

impl HaarExpansion {
    pub fn zeros(dim: HaarDim, depth: u32) -> Result<Self> {
        if depth > dim.max_depth() {
            return Err(Error::DepthTooLarge(depth));
        }
        Ok(Self { dim, depth, coeffs: vec![0.0; dim.dimension(depth)] })
    }

    pub fn from_coeffs(dim: HaarDim, depth: u32, coeffs: Vec<f64>) -> Result<Self> {
        if depth > dim.max_depth() {
            return Err(Error::DepthTooLarge(depth));
        }
        if coeffs.len() != dim.dimension(depth) {
            return Err(Error::ShapeMismatch { expected: dim.dimension(depth), found: coeffs.len() });
        }
        Ok(Self { dim, depth, coeffs })
    }

    pub fn from_terms(dim: HaarDim, depth: u32, terms: &[(HaarIndex, f64)]) -> Result<Self> {
        let mut f = Self::zeros(dim, depth)?;
        for (idx, c) in terms {
            f.add(idx, *c)?;
        }
        Ok(f)
    }

    pub fn single(dim: HaarDim, depth: u32, idx: HaarIndex) -> Result<Self> {
        Self::from_terms(dim, depth, &[(idx, 1.0)])
    }

    pub fn dim(&self) -> HaarDim {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn slot(&self, idx: &HaarIndex) -> Option<usize> {
        (idx.dim() == self.dim && idx.depth() <= self.depth).then(|| idx.ordinal() as usize - 1)
    }

    pub fn get(&self, idx: &HaarIndex) -> f64 {
        self.slot(idx).map_or(0.0, |s| self.coeffs[s])
    }

    pub fn add(&mut self, idx: &HaarIndex, c: f64) -> Result<()> {
        let slot = self.slot(idx).ok_or_else(|| {
            Error::InvalidArgument(format!("index {idx:?} does not fit a {:?} expansion of depth {}", self.dim, self.depth))
        })?;
        self.coeffs[slot] += c;
        Ok(())
    }

    /// Nonzero terms in the fixed order.
    pub fn terms(&self) -> Vec<(HaarIndex, f64)> {
        let order = space_index_order(self.dim, self.depth).expect("valid depth");
        order.into_iter().zip(&self.coeffs).filter(|(_, c)| **c != 0.0).map(|(i, c)| (i, *c)).collect()
    }

    /// The same function encoded at a larger depth. Truncations are initial
    /// segments of the fixed order, so this only pads with zeros.
    pub fn refine(&self, depth: u32) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::InvalidArgument(format!("cannot refine depth {} to {depth}", self.depth)));
        }
        let mut f = Self::zeros(self.dim, depth)?;
        f.coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        Ok(f)
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
    }

    pub fn axpy(&mut self, s: f64, other: &HaarExpansion) -> Result<()> {
        if other.dim != self.dim || other.depth != self.depth {
            return Err(Error::DimensionMismatch("axpy needs expansions of equal shape".into()));
        }
        self.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a += s * b);
        Ok(())
    }
}

impl Serialize for HaarExpansion {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("HaarExpansion", 3)?;
        st.serialize_field("dim", &(if self.dim == HaarDim::OneParam { 1 } else { 2 }))?;
        st.serialize_field("depth", &self.depth)?;
        st.serialize_field("terms", &self.terms())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for HaarExpansion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: u8,
            depth: u32,
            terms: Vec<(HaarIndex, f64)>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let dim = match raw.dim {
            1 => HaarDim::OneParam,
            2 => HaarDim::TwoParam,
            d => return Err(de::Error::custom(format!("unsupported dim {d}"))),
        };
        HaarExpansion::from_terms(dim, raw.depth, &raw.terms).map_err(de::Error::custom)
    }
}

/// Coordinate functional: the coefficient of `h_idx` in `f` (0 when absent).
pub fn dual_coefficient(idx: &HaarIndex, f: &HaarExpansion) -> f64 {
    f.get(idx)
}

/// Exact norm of `f` in the space family of `spec`; evaluated at `f`'s own
/// depth, which does not change the value.
pub fn norm(spec: &SpaceSpec, f: &HaarExpansion) -> Result<f64> {
    if spec.dim() != f.dim {
        return Err(Error::DimensionMismatch(format!(
            "{} needs a {:?} expansion, got {:?}",
            spec.kind.label(),
            spec.dim(),
            f.dim
        )));
    }
    Ok(eval_norm(spec.kind, f.depth, &f.coeffs))
}

/// A step function sampled on the dyadic grid of an expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub dim: HaarDim,
    /// The grid has `2^resolution` cells per axis.
    pub resolution: u32,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        for t in [x, y] {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::PointOutOfRange(t));
            }
        }
        let n = 1u64 << self.resolution;
        let cx = (x * n as f64) as usize;
        Ok(match self.dim {
            HaarDim::OneParam => self.values[cx],
            HaarDim::TwoParam => self.values[cx * n as usize + (y * n as f64) as usize],
        })
    }
}

/// Pointwise square function `(Σ a_I² h_I²)^{1/2}` (one- or two-parameter).
pub fn square_function(f: &HaarExpansion) -> StepFunction {
    let g = Grid::new(f.dim, f.depth);
    let values = g.square_sums(&f.coeffs).into_iter().map(f64::sqrt).collect();
    StepFunction { dim: f.dim, resolution: g.res, values }
}

/// Pointwise values of `Σ a_I h_I`.
pub fn point_values(f: &HaarExpansion) -> StepFunction {
    let g = Grid::new(f.dim, f.depth);
    StepFunction { dim: f.dim, resolution: g.res, values: g.values(&f.coeffs) }
}

/// Grid bookkeeping for a given depth.
struct Grid {
    dim: HaarDim,
    depth: u32,
    res: u32,
    /// 2D only: `off[a][b]` is the 0-based slot of the rectangle at levels
    /// `(a, b)` with both positions 0.
    off: Vec<Vec<usize>>,
}

impl Grid {
    fn new(dim: HaarDim, depth: u32) -> Self {
        let mut off = Vec::new();
        if dim == HaarDim::TwoParam {
            for a in 0..=depth {
                let row = (0..=depth)
                    .map(|b| {
                        let r = crate::dyadic::DyadicRect::new(
                            DyadicInterval { level: a, position: 0 },
                            DyadicInterval { level: b, position: 0 },
                        );
                        r.ordinal() as usize - 1
                    })
                    .collect();
                off.push(row);
            }
        }
        Self { dim, depth, res: depth + 1, off }
    }

    fn cells(&self) -> usize {
        1usize << self.res
    }

    #[inline]
    fn slot1(&self, level: u32, cell: usize) -> usize {
        (1usize << level) - 1 + (cell >> (self.res - level))
    }

    #[inline]
    fn sign(&self, level: u32, cell: usize) -> f64 {
        if (cell >> (self.res - level - 1)) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn slot2(&self, a: u32, b: u32, cx: usize, cy: usize) -> usize {
        self.off[a as usize][b as usize] + ((cx >> (self.res - a)) << b) + (cy >> (self.res - b))
    }

    fn square_sums(&self, c: &[f64]) -> Vec<f64> {
        let n = self.cells();
        match self.dim {
            HaarDim::OneParam => (0..n)
                .map(|cell| (0..=self.depth).map(|l| c[self.slot1(l, cell)].powi(2)).sum())
                .collect(),
            HaarDim::TwoParam => {
                let mut out = vec![0.0; n * n];
                for cx in 0..n {
                    for cy in 0..n {
                        let mut s = 0.0;
                        for a in 0..=self.depth {
                            for b in 0..=self.depth {
                                s += c[self.slot2(a, b, cx, cy)].powi(2);
                            }
                        }
                        out[cx * n + cy] = s;
                    }
                }
                out
            }
        }
    }

    fn values(&self, c: &[f64]) -> Vec<f64> {
        let n = self.cells();
        match self.dim {
            HaarDim::OneParam => (0..n)
                .map(|cell| (0..=self.depth).map(|l| self.sign(l, cell) * c[self.slot1(l, cell)]).sum())
                .collect(),
            HaarDim::TwoParam => {
                let mut out = vec![0.0; n * n];
                for cx in 0..n {
                    for cy in 0..n {
                        let mut v = 0.0;
                        for a in 0..=self.depth {
                            let mut inner = 0.0;
                            for b in 0..=self.depth {
                                inner += self.sign(b, cy) * c[self.slot2(a, b, cx, cy)];
                            }
                            v += self.sign(a, cx) * inner;
                        }
                        out[cx * n + cy] = v;
                    }
                }
                out
            }
        }
    }
}

/// `(mean over cells of g^{p/2})^{1/p}` where `g` holds squared magnitudes.
fn lp_of_squares(sq: &[f64], p: f64) -> f64 {
    let w = 1.0 / sq.len() as f64;
    if p == 2.0 {
        (sq.iter().sum::<f64>() * w).sqrt()
    } else {
        (sq.iter().map(|s| s.powf(p / 2.0)).sum::<f64>() * w).powf(1.0 / p)
    }
}

/// Iterated mixed norm: inner exponent over y, outer over x.
fn mixed_of_squares(sq: &[f64], n: usize, outer: f64, inner: f64) -> f64 {
    let w = 1.0 / n as f64;
    let total: f64 = sq
        .chunks(n)
        .map(|row| {
            let i = row.iter().map(|s| s.powf(inner / 2.0)).sum::<f64>() * w;
            i.powf(outer / inner)
        })
        .sum::<f64>()
        * w;
    total.powf(1.0 / outer)
}

fn eval_norm(kind: SpaceKind, depth: u32, a: &[f64]) -> f64 {
    let g = Grid::new(kind.dim(), depth);
    match kind {
        SpaceKind::Hp { p } => lp_of_squares(&g.square_sums(a), p),
        SpaceKind::Lp { p } => {
            let v: Vec<f64> = g.values(a).into_iter().map(|x| x * x).collect();
            lp_of_squares(&v, p)
        }
        SpaceKind::HpHq { p, q } => mixed_of_squares(&g.square_sums(a), g.cells(), p, q),
        SpaceKind::LrLs { r, s } => {
            let v: Vec<f64> = g.values(a).into_iter().map(|x| x * x).collect();
            mixed_of_squares(&v, g.cells(), r, s)
        }
        SpaceKind::Vmo => bmo_1d(&g, a),
        SpaceKind::VmoHr { r } => bmo_hr(&g, a, r),
    }
}

/// `sup_I (1/|I|) ∫_I |Σ_{J⊆I} a_J h_J|²`, square-rooted. Partial sums over
/// levels `>= l` are accumulated from the finest level up, so every dyadic
/// interval of level `l` sees exactly the Haar functions it contains.
fn bmo_1d(g: &Grid, a: &[f64]) -> f64 {
    let n = g.cells();
    let mut partial = vec![0.0f64; n];
    let mut best = 0.0f64;
    for level in (0..=g.depth).rev() {
        for (cell, v) in partial.iter_mut().enumerate() {
            *v += g.sign(level, cell) * a[g.slot1(level, cell)];
        }
        let width = n >> level;
        for chunk in partial.chunks(width) {
            let avg = chunk.iter().map(|v| v * v).sum::<f64>() / width as f64;
            best = best.max(avg);
        }
    }
    best.sqrt()
}

/// BMO over x-intervals of the H^r(y)-valued coefficient slices.
fn bmo_hr(g: &Grid, a: &[f64], r: f64) -> f64 {
    let n = g.cells();
    let d1 = HaarDim::OneParam.dimension(g.depth);
    let inner = Grid::new(HaarDim::OneParam, g.depth);
    // slices[cx] holds the y-coefficients of Σ_{I: level >= l, I ∋ x} h_I(x) f_I
    let mut slices = vec![vec![0.0f64; d1]; n];
    let mut best = 0.0f64;
    for level in (0..=g.depth).rev() {
        for (cx, slice) in slices.iter_mut().enumerate() {
            let sx = g.sign(level, cx);
            for b in 0..=g.depth {
                let base = (1usize << b) - 1;
                for py in 0..(1usize << b) {
                    let slot = g.off[level as usize][b as usize] + ((cx >> (g.res - level)) << b) + py;
                    slice[base + py] += sx * a[slot];
                }
            }
        }
        let width = n >> level;
        for chunk in slices.chunks(width) {
            let avg = chunk
                .iter()
                .map(|s| lp_of_squares(&inner.square_sums(s), r).powi(2))
                .sum::<f64>()
                / width as f64;
            best = best.max(avg);
        }
    }
    best.sqrt()
}
