//! Dyadic intervals and rectangles, L^∞-normalized Haar functions, and the
//! fixed linear orders used to enumerate them.
//!
//! One-parameter indices are ordered by `(level, position)`; this gives the
//! closed-form ordinal `2^level + position` (1-based). Two-parameter indices
//! are ordered by `(max level, level of I, level of J, position of I,
//! position of J)`, so a truncation at depth `d` is always an initial segment
//! of the truncation at depth `d + 1`.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest one-parameter level we allow (2^25 cells already means
/// hundreds of megabytes for a single dense coefficient vector).
pub const MAX_DEPTH_1D: u32 = 24;
/// Deepest two-parameter level per axis.
pub const MAX_DEPTH_2D: u32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub level: u32,
    pub position: u64,
}

impl DyadicInterval {
    pub fn new(level: u32, position: u64) -> Result<Self> {
        if level > 62 || position >= (1u64 << level) {
            return Err(Error::BadPosition { level, position });
        }
        Ok(Self { level, position })
    }

    pub const fn unit() -> Self {
        Self { level: 0, position: 0 }
    }

    pub fn measure(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn start(&self) -> f64 {
        self.position as f64 * self.measure()
    }

    pub fn end(&self) -> f64 {
        (self.position + 1) as f64 * self.measure()
    }

    pub fn contains_point(&self, x: f64) -> bool {
        self.start() <= x && x < self.end()
    }

    /// `true` when `other ⊆ self`.
    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.level >= self.level && (other.position >> (other.level - self.level)) == self.position
    }

    pub fn is_disjoint(&self, other: &DyadicInterval) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    pub fn left_half(&self) -> Self {
        Self { level: self.level + 1, position: 2 * self.position }
    }

    pub fn right_half(&self) -> Self {
        Self { level: self.level + 1, position: 2 * self.position + 1 }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self { level: self.level - 1, position: self.position / 2 })
    }

    /// 1-based ordinal in the one-parameter `(level, position)` order.
    pub fn ordinal(&self) -> u64 {
        (1u64 << self.level) + self.position
    }

    pub fn from_ordinal(ordinal: u64) -> Result<Self> {
        if ordinal == 0 {
            return Err(Error::InvalidArgument("Haar ordinals start at 1".into()));
        }
        let level = 63 - ordinal.leading_zeros();
        Ok(Self { level, position: ordinal - (1u64 << level) })
    }

    /// Value of `h_I` at `x`: `+1` on the left half, `-1` on the right half,
    /// `0` outside `I`.
    pub fn haar_eval(&self, x: f64) -> Result<i8> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::PointOutOfRange(x));
        }
        if !self.contains_point(x) {
            return Ok(0);
        }
        let mid = 0.5 * (self.start() + self.end());
        Ok(if x < mid { 1 } else { -1 })
    }

    /// Sign of `h_I` on the grid cell `cell` of a grid with `2^resolution`
    /// cells, `resolution > level`. Returns 0 outside the support.
    pub fn haar_sign_on_cell(&self, cell: u64, resolution: u32) -> i8 {
        debug_assert!(resolution > self.level);
        if cell >> (resolution - self.level) != self.position {
            return 0;
        }
        if (cell >> (resolution - self.level - 1)) & 1 == 0 {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}/2^{}, {}/2^{})", self.position, self.level, self.position + 1, self.level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicRect {
    pub x: DyadicInterval,
    pub y: DyadicInterval,
}

impl DyadicRect {
    pub fn new(x: DyadicInterval, y: DyadicInterval) -> Self {
        Self { x, y }
    }

    pub fn measure(&self) -> f64 {
        self.x.measure() * self.y.measure()
    }

    pub fn contains(&self, other: &DyadicRect) -> bool {
        self.x.contains(&other.x) && self.y.contains(&other.y)
    }

    pub fn max_level(&self) -> u32 {
        self.x.level.max(self.y.level)
    }

    pub fn haar_eval(&self, x: f64, y: f64) -> Result<i8> {
        Ok(self.x.haar_eval(x)? * self.y.haar_eval(y)?)
    }

    /// 1-based ordinal in the two-parameter order.
    pub fn ordinal(&self) -> u64 {
        let (a, b) = (self.x.level, self.y.level);
        let m = a.max(b);
        let pm = 1u64 << m;
        let before_m = (pm - 1) * (pm - 1);
        let group_offset = if a < m {
            pm * ((1u64 << a) - 1)
        } else {
            pm * (pm - 1) + pm * ((1u64 << b) - 1)
        };
        1 + before_m + group_offset + self.x.position * (1u64 << b) + self.y.position
    }
}

/// Number of parameters of a Haar system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HaarDim {
    OneParam,
    TwoParam,
}

impl HaarDim {
    /// Number of Haar functions with every level `<= depth`.
    pub fn dimension(self, depth: u32) -> usize {
        let one = (1usize << (depth + 1)) - 1;
        match self {
            HaarDim::OneParam => one,
            HaarDim::TwoParam => one * one,
        }
    }

    pub fn max_depth(self) -> u32 {
        match self {
            HaarDim::OneParam => MAX_DEPTH_1D,
            HaarDim::TwoParam => MAX_DEPTH_2D,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HaarIndex {
    One(DyadicInterval),
    Two(DyadicRect),
}

impl HaarIndex {
    pub fn dim(&self) -> HaarDim {
        match self {
            HaarIndex::One(_) => HaarDim::OneParam,
            HaarIndex::Two(_) => HaarDim::TwoParam,
        }
    }

    /// Within-space ordinal `j` (1-based) in the fixed order.
    pub fn ordinal(&self) -> u64 {
        match self {
            HaarIndex::One(i) => i.ordinal(),
            HaarIndex::Two(r) => r.ordinal(),
        }
    }

    /// Largest level among the parameters.
    pub fn depth(&self) -> u32 {
        match self {
            HaarIndex::One(i) => i.level,
            HaarIndex::Two(r) => r.max_level(),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            HaarIndex::One(i) => i.measure(),
            HaarIndex::Two(r) => r.measure(),
        }
    }
}

/// Enumerate all Haar indices of the given kind with levels `<= depth`, in
/// the fixed order.
pub fn space_index_order(dim: HaarDim, depth: u32) -> Result<Vec<HaarIndex>> {
    if depth > dim.max_depth() {
        return Err(Error::DepthTooLarge(depth));
    }
    let mut out = Vec::with_capacity(dim.dimension(depth));
    match dim {
        HaarDim::OneParam => {
            for level in 0..=depth {
                for position in 0..(1u64 << level) {
                    out.push(HaarIndex::One(DyadicInterval { level, position }));
                }
            }
        }
        HaarDim::TwoParam => {
            for m in 0..=depth {
                let mut push_group = |a: u32, b: u32| {
                    for px in 0..(1u64 << a) {
                        for py in 0..(1u64 << b) {
                            out.push(HaarIndex::Two(DyadicRect {
                                x: DyadicInterval { level: a, position: px },
                                y: DyadicInterval { level: b, position: py },
                            }));
                        }
                    }
                };
                for a in 0..m {
                    push_group(a, m);
                }
                for b in 0..=m {
                    push_group(m, b);
                }
            }
        }
    }
    Ok(out)
}

/// Cantor-style enumeration `ν: ℕ² → ℕ` by anti-diagonals (`k + j`), then by
/// `k`. Monotone in `j` for fixed `k`.
pub fn pair_encode(k: u64, j: u64) -> Result<u64> {
    if k == 0 || j == 0 {
        return Err(Error::InvalidArgument(format!("pair ({k},{j}) must be 1-based")));
    }
    let s = k + j;
    Ok((s - 2) * (s - 1) / 2 + k)
}

/// Inverse of [`pair_encode`]: `n ↦ (κ(n), ι(n))`.
pub fn pair_decode(n: u64) -> Result<(u64, u64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("pair index must be >= 1".into()));
    }
    // largest t = s - 1 with t(t-1)/2 < n
    let mut t = (((8.0 * n as f64).sqrt() + 1.0) / 2.0).floor() as u64;
    while t * (t - 1) / 2 >= n {
        t -= 1;
    }
    while (t + 1) * t / 2 < n {
        t += 1;
    }
    let k = n - t * (t - 1) / 2;
    let s = t + 1;
    Ok((k, s - k))
}

#[derive(Serialize, Deserialize)]
struct IntervalRepr {
    level: u32,
    pos: u64,
}

impl Serialize for HaarIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HaarIndex::One(i) => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("dim", &1)?;
                map.serialize_entry("level", &i.level)?;
                map.serialize_entry("pos", &i.position)?;
                map.end()
            }
            HaarIndex::Two(r) => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("dim", &2)?;
                map.serialize_entry("x", &IntervalRepr { level: r.x.level, pos: r.x.position })?;
                map.serialize_entry("y", &IntervalRepr { level: r.y.level, pos: r.y.position })?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for HaarIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: u8,
            level: Option<u32>,
            pos: Option<u64>,
            x: Option<IntervalRepr>,
            y: Option<IntervalRepr>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let interval = |level: u32, pos: u64| DyadicInterval::new(level, pos).map_err(de::Error::custom);
        match raw.dim {
            1 => {
                let (level, pos) = raw
                    .level
                    .zip(raw.pos)
                    .ok_or_else(|| de::Error::custom("1D index needs level and pos"))?;
                Ok(HaarIndex::One(interval(level, pos)?))
            }
            2 => {
                let (x, y) = raw.x.zip(raw.y).ok_or_else(|| de::Error::custom("2D index needs x and y"))?;
                Ok(HaarIndex::Two(DyadicRect::new(interval(x.level, x.pos)?, interval(y.level, y.pos)?)))
            }
            d => Err(de::Error::custom(format!("unsupported dim {d}"))),
        }
    }
}
