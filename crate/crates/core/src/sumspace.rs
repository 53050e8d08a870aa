//! Finite truncations of `Z = ℓ∞(X_k)`, vectors and functionals on them.
//!
//! Coordinates are taken with respect to the *normalized* Haar system
//! `e_(k,j) = h_j / ‖h_j‖_{X_k}` and its biorthogonal functionals. Component
//! indices `k` are 0-based; within-space ordinals `j` are 1-based. The global
//! enumeration sorts all pairs by `pair_encode(k + 1, j)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dyadic::pair_encode;
use crate::error::{Error, Result};
use crate::funcspace::{HaarExpansion, SpaceSpec};

#[derive(Serialize, Deserialize)]
struct ZTruncRepr {
    components: Vec<SpaceSpec>,
}

/// A finite list of component spaces with the global coordinate layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZTruncRepr", into = "ZTruncRepr")]
pub struct ZTrunc {
    components: Vec<SpaceSpec>,
    /// `(k, j)` for every global coordinate, `j` 1-based.
    coords: Vec<(usize, usize)>,
    /// `global[k][j - 1]` is the global position of `e_(k,j)`.
    global: Vec<Vec<usize>>,
    haar_norms: Vec<Vec<f64>>,
}

impl TryFrom<ZTruncRepr> for ZTrunc {
    type Error = Error;
    fn try_from(r: ZTruncRepr) -> Result<Self> {
        ZTrunc::new(r.components)
    }
}

impl From<ZTrunc> for ZTruncRepr {
    fn from(z: ZTrunc) -> Self {
        ZTruncRepr { components: z.components }
    }
}

impl ZTrunc {
    pub fn new(components: Vec<SpaceSpec>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("a truncation needs at least one component".into()));
        }
        let mut keyed = Vec::new();
        for (k, spec) in components.iter().enumerate() {
            for j in 1..=spec.dimension() {
                keyed.push((pair_encode(k as u64 + 1, j as u64)?, k, j));
            }
        }
        keyed.sort_unstable();
        let mut global: Vec<Vec<usize>> = components.iter().map(|s| vec![0; s.dimension()]).collect();
        let coords = keyed
            .iter()
            .enumerate()
            .map(|(g, &(_, k, j))| {
                global[k][j - 1] = g;
                (k, j)
            })
            .collect();
        let haar_norms = components.iter().map(|s| s.haar_norms()).collect();
        Ok(Self { components, coords, global, haar_norms })
    }

    pub fn components(&self) -> &[SpaceSpec] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Total number of global coordinates.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn component_dim(&self, k: usize) -> usize {
        self.global[k].len()
    }

    /// `(k, j)` of global coordinate `n` (0-based `n`).
    pub fn coord(&self, n: usize) -> (usize, usize) {
        self.coords[n]
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    /// Global position of `e_(k,j)`, if it exists in the truncation.
    pub fn global_index(&self, k: usize, j: usize) -> Option<usize> {
        (j >= 1).then(|| self.global.get(k)?.get(j - 1).copied()).flatten()
    }

    /// Global positions of component `k`, in within-space order.
    pub fn component_positions(&self, k: usize) -> &[usize] {
        &self.global[k]
    }

    pub fn haar_norms(&self, k: usize) -> &[f64] {
        &self.haar_norms[k]
    }

    /// Raw Haar coefficients of component `k` of the vector with normalized
    /// global coordinates `x`.
    pub fn component_raw(&self, k: usize, x: &[f64]) -> Vec<f64> {
        self.global[k].iter().zip(&self.haar_norms[k]).map(|(&g, n)| x[g] / n).collect()
    }

    /// Norm of component `k` of the vector with global coordinates `x`.
    pub fn component_norm(&self, k: usize, x: &[f64]) -> f64 {
        self.components[k].eval_norm(&self.component_raw(k, x))
    }

    /// Z-norm of the vector with global coordinates `x`.
    pub fn norm_of_coords(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        (0..self.len()).map(|k| self.component_norm(k, x)).fold(0.0, f64::max)
    }
}

/// An element `(x_k)` of the truncated ℓ∞-sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZVector {
    pub parts: Vec<HaarExpansion>,
}

impl ZVector {
    pub fn zeros(trunc: &ZTrunc) -> Self {
        let parts = trunc
            .components()
            .iter()
            .map(|s| HaarExpansion::zeros(s.dim(), s.depth).expect("validated spec"))
            .collect();
        Self { parts }
    }

    /// Build from normalized global coordinates.
    pub fn from_coords(trunc: &ZTrunc, x: &[f64]) -> Result<Self> {
        if x.len() != trunc.dim() {
            return Err(Error::ShapeMismatch { expected: trunc.dim(), found: x.len() });
        }
        let parts = trunc
            .components()
            .iter()
            .enumerate()
            .map(|(k, s)| HaarExpansion::from_coeffs(s.dim(), s.depth, trunc.component_raw(k, x)))
            .collect::<Result<_>>()?;
        Ok(Self { parts })
    }

    /// The normalized basis vector `e_(k,j)`.
    pub fn basis(trunc: &ZTrunc, k: usize, j: usize) -> Result<Self> {
        let g = trunc
            .global_index(k, j)
            .ok_or_else(|| Error::InvalidArgument(format!("no coordinate ({k},{j}) in the truncation")))?;
        let mut x = vec![0.0; trunc.dim()];
        x[g] = 1.0;
        Self::from_coords(trunc, &x)
    }

    /// Normalized global coordinates.
    pub fn to_coords(&self, trunc: &ZTrunc) -> Result<Vec<f64>> {
        check_shape(trunc, self)?;
        let mut x = vec![0.0; trunc.dim()];
        for (k, part) in self.parts.iter().enumerate() {
            for ((&g, n), a) in trunc.component_positions(k).iter().zip(trunc.haar_norms(k)).zip(part.coeffs()) {
                x[g] = a * n;
            }
        }
        Ok(x)
    }

    /// Components with a nonzero part.
    pub fn support(&self) -> BTreeSet<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.coeffs().iter().any(|c| *c != 0.0))
            .map(|(k, _)| k)
            .collect()
    }
}

fn check_shape(trunc: &ZTrunc, v: &ZVector) -> Result<()> {
    if v.parts.len() != trunc.len() {
        return Err(Error::ShapeMismatch { expected: trunc.len(), found: v.parts.len() });
    }
    for (spec, part) in trunc.components().iter().zip(&v.parts) {
        if part.dim() != spec.dim() || part.depth() != spec.depth {
            return Err(Error::DimensionMismatch(format!(
                "part of depth {} does not match {} at depth {}",
                part.depth(),
                spec.kind.label(),
                spec.depth
            )));
        }
    }
    Ok(())
}

/// `sup_k ‖x_k‖_{X_k}`.
pub fn z_norm(trunc: &ZTrunc, v: &ZVector) -> Result<f64> {
    check_shape(trunc, v)?;
    Ok(trunc
        .components()
        .iter()
        .zip(&v.parts)
        .map(|(s, p)| s.eval_norm(p.coeffs()))
        .fold(0.0, f64::max))
}

/// `P_N`: keep the components in `n`, zero the rest.
pub fn project(n: &BTreeSet<usize>, v: &ZVector) -> ZVector {
    let parts = v
        .parts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if n.contains(&k) {
                p.clone()
            } else {
                HaarExpansion::zeros(p.dim(), p.depth()).expect("valid shape")
            }
        })
        .collect();
    ZVector { parts }
}

/// A functional `Σ c_(k,j) e*_(k,j)` in normalized dual coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZFunctional {
    pub parts: Vec<Vec<f64>>,
}

impl ZFunctional {
    pub fn zeros(trunc: &ZTrunc) -> Self {
        Self { parts: (0..trunc.len()).map(|k| vec![0.0; trunc.component_dim(k)]).collect() }
    }

    /// The coordinate functional `e*_(k,j)`.
    pub fn coordinate(trunc: &ZTrunc, k: usize, j: usize) -> Result<Self> {
        let mut f = Self::zeros(trunc);
        let slot = f
            .parts
            .get_mut(k)
            .and_then(|p| p.get_mut(j.wrapping_sub(1)))
            .ok_or_else(|| Error::InvalidArgument(format!("no coordinate ({k},{j}) in the truncation")))?;
        *slot = 1.0;
        Ok(f)
    }

    pub fn from_coords(trunc: &ZTrunc, c: &[f64]) -> Result<Self> {
        if c.len() != trunc.dim() {
            return Err(Error::ShapeMismatch { expected: trunc.dim(), found: c.len() });
        }
        let parts = (0..trunc.len())
            .map(|k| trunc.component_positions(k).iter().map(|&g| c[g]).collect())
            .collect();
        Ok(Self { parts })
    }

    pub fn to_coords(&self, trunc: &ZTrunc) -> Vec<f64> {
        let mut c = vec![0.0; trunc.dim()];
        for (k, part) in self.parts.iter().enumerate() {
            for (&g, v) in trunc.component_positions(k).iter().zip(part) {
                c[g] = *v;
            }
        }
        c
    }

    fn check(&self, trunc: &ZTrunc) -> Result<()> {
        if self.parts.len() != trunc.len() {
            return Err(Error::ShapeMismatch { expected: trunc.len(), found: self.parts.len() });
        }
        for (k, p) in self.parts.iter().enumerate() {
            if p.len() != trunc.component_dim(k) {
                return Err(Error::ShapeMismatch { expected: trunc.component_dim(k), found: p.len() });
            }
        }
        Ok(())
    }
}

/// The action `z*(v)`.
pub fn pair(trunc: &ZTrunc, f: &ZFunctional, v: &ZVector) -> Result<f64> {
    f.check(trunc)?;
    let x = v.to_coords(trunc)?;
    Ok(f.parts
        .iter()
        .enumerate()
        .map(|(k, p)| trunc.component_positions(k).iter().zip(p).map(|(&g, c)| c * x[g]).sum::<f64>())
        .sum())
}

/// Two-sided estimate of a dual norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualNormBounds {
    /// Attained by an explicit unit vector.
    pub lower: f64,
    /// Analytic bound (ℓ¹ of the coordinates; exact ℓ² on Hilbert components).
    pub upper: f64,
}

impl DualNormBounds {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

/// Bounds for the norm of `c = (c_j)_{j >= m}` acting on the tail
/// `[e_(k,j) : j >= m]` of component `k`. Coordinate functionals of every
/// catalog space have norm at most one, which makes the ℓ¹ sum an upper bound.
/// The upper half of [`component_tail_dual`] alone: exact for Hilbert
/// components, the ℓ¹ norm of the dual coordinates otherwise.
pub fn component_tail_upper(trunc: &ZTrunc, k: usize, c: &[f64], m: usize) -> f64 {
    let tail = &c[m.saturating_sub(1).min(c.len())..];
    if trunc.components()[k].kind.is_hilbert() {
        tail.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        tail.iter().map(|v| v.abs()).sum()
    }
}

pub fn component_tail_dual(trunc: &ZTrunc, k: usize, c: &[f64], m: usize) -> DualNormBounds {
    let start = m.saturating_sub(1).min(c.len());
    let tail = &c[start..];
    if tail.iter().all(|v| *v == 0.0) {
        return DualNormBounds { lower: 0.0, upper: 0.0 };
    }
    let spec = &trunc.components()[k];
    let upper = component_tail_upper(trunc, k, c, m);
    if spec.kind.is_hilbert() {
        return DualNormBounds { lower: upper, upper };
    }
    let single = tail.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // sign-aligned witness w = Σ sign(c_j) e_j over the tail
    let norms = trunc.haar_norms(k);
    let raw: Vec<f64> =
        (0..c.len()).map(|j| if j < start || c[j] == 0.0 { 0.0 } else { c[j].signum() / norms[j] }).collect();
    let w = spec.eval_norm(&raw);
    let aligned = if w > 0.0 { upper / w } else { 0.0 };
    DualNormBounds { lower: single.max(aligned).min(upper), upper }
}

/// Norm of `z*` restricted to `ℓ∞(W_k)`, `W_k = [e_(k,j) : j >= tails[k]]`.
/// The dual of a finite ℓ∞-sum is the ℓ¹-sum of the component duals.
pub fn restricted_dual_norm(trunc: &ZTrunc, f: &ZFunctional, tails: &[usize]) -> Result<DualNormBounds> {
    f.check(trunc)?;
    if tails.len() != trunc.len() {
        return Err(Error::ShapeMismatch { expected: trunc.len(), found: tails.len() });
    }
    let mut total = DualNormBounds { lower: 0.0, upper: 0.0 };
    for (k, (c, &m)) in f.parts.iter().zip(tails).enumerate() {
        if m == 0 || m > trunc.component_dim(k) + 1 {
            return Err(Error::InvalidArgument(format!(
                "tail start {m} outside 1..={} for component {k}",
                trunc.component_dim(k) + 1
            )));
        }
        let b = component_tail_dual(trunc, k, c, m);
        total.lower += b.lower;
        total.upper += b.upper;
    }
    Ok(total)
}
