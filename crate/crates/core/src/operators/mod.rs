//! Dense operators on truncated ℓ∞-sums, in normalized Haar coordinates.

mod estimate;
mod gamma;

pub use estimate::{operator_norm_bounds, operator_norm_bounds_with, NormBounds, NormSearch};
pub use gamma::{select_gamma, GammaSelection};

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;
use crate::sumspace::{ZTrunc, ZVector};

/// A linear map between truncated ℓ∞-sums, stored as a dense matrix over
/// the global coordinates (rows: codomain, columns: domain).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorZ {
    domain: ZTrunc,
    codomain: ZTrunc,
    matrix: DMatrix<f64>,
}

impl OperatorZ {
    pub fn new(domain: ZTrunc, codomain: ZTrunc, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != codomain.dim() || matrix.ncols() != domain.dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, spaces need {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                codomain.dim(),
                domain.dim()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("operator entries must be finite".into()));
        }
        Ok(Self { domain, codomain, matrix })
    }

    pub fn endo(trunc: ZTrunc, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(trunc.clone(), trunc, matrix)
    }

    pub fn identity(trunc: &ZTrunc) -> Self {
        Self { domain: trunc.clone(), codomain: trunc.clone(), matrix: DMatrix::identity(trunc.dim(), trunc.dim()) }
    }

    pub fn zeros(domain: &ZTrunc, codomain: &ZTrunc) -> Self {
        Self {
            domain: domain.clone(),
            codomain: codomain.clone(),
            matrix: DMatrix::zeros(codomain.dim(), domain.dim()),
        }
    }

    pub fn from_diagonal(trunc: &ZTrunc, diag: &[f64]) -> Result<Self> {
        if diag.len() != trunc.dim() {
            return Err(Error::ShapeMismatch { expected: trunc.dim(), found: diag.len() });
        }
        Self::endo(trunc.clone(), DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn domain(&self) -> &ZTrunc {
        &self.domain
    }

    pub fn codomain(&self) -> &ZTrunc {
        &self.codomain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_endo(&self) -> bool {
        self.domain == self.codomain
    }

    /// `e*_m(T e_n)` for global positions `m`, `n`.
    pub fn entry(&self, m: usize, n: usize) -> f64 {
        self.matrix[(m, n)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }

    pub fn apply_coords(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.matrix * nalgebra::DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &OperatorZ) -> Result<OperatorZ> {
        if other.codomain != self.domain {
            return Err(Error::DimensionMismatch("composition of incompatible operators".into()));
        }
        Ok(OperatorZ { domain: other.domain.clone(), codomain: self.codomain.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn sub(&self, other: &OperatorZ) -> Result<OperatorZ> {
        if other.domain != self.domain || other.codomain != self.codomain {
            return Err(Error::DimensionMismatch("difference of incompatible operators".into()));
        }
        Ok(OperatorZ { domain: self.domain.clone(), codomain: self.codomain.clone(), matrix: &self.matrix - &other.matrix })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `P_rows ∘ T|_{Z_cols}` as an operator between the sub-sums on the
    /// given component sets (components keep their relative order).
    pub fn restrict(&self, rows: &BTreeSet<usize>, cols: &BTreeSet<usize>) -> Result<OperatorZ> {
        let (dom, dmap) = sub_trunc(&self.domain, cols)?;
        let (cod, cmap) = sub_trunc(&self.codomain, rows)?;
        let matrix = DMatrix::from_fn(cod.dim(), dom.dim(), |r, c| self.matrix[(cmap[r], dmap[c])]);
        OperatorZ::new(dom, cod, matrix)
    }

    /// Analytic upper bound for the operator norm.
    ///
    /// Normalized basis vectors have norm one and coordinate functionals
    /// norm at most one in every catalog space, so
    /// `‖P_k T v‖ <= Σ_{r∈k} Σ_i |T_ri| · ‖v‖`; Hilbert codomain components use
    /// the column ℓ² norms instead. A diagonal operator between equal
    /// 1-unconditional components has norm exactly `max |d|`.
    pub fn analytic_upper(&self) -> f64 {
        let one_unc = self.is_endo() && self.domain.components().iter().all(|s| s.kind.is_one_unconditional());
        if one_unc && is_diagonal(self) {
            return self.diagonal().iter().fold(0.0, |a, d| a.max(d.abs()));
        }
        (0..self.codomain.len())
            .map(|k| {
                let rows = self.codomain.component_positions(k);
                let l1: f64 = rows.iter().map(|&r| self.matrix.row(r).iter().map(|v| v.abs()).sum::<f64>()).sum();
                if self.codomain.components()[k].kind.is_hilbert() {
                    let l2: f64 = (0..self.matrix.ncols())
                        .map(|c| rows.iter().map(|&r| self.matrix[(r, c)].powi(2)).sum::<f64>().sqrt())
                        .sum();
                    l1.min(l2)
                } else {
                    l1
                }
            })
            .fold(0.0, f64::max)
    }
}

/// The truncation on the components `keep` and, for each of its global
/// coordinates, the global position in `trunc`.
pub fn sub_trunc(trunc: &ZTrunc, keep: &BTreeSet<usize>) -> Result<(ZTrunc, Vec<usize>)> {
    let ks: Vec<usize> = keep.iter().copied().collect();
    if ks.iter().any(|&k| k >= trunc.len()) {
        return Err(Error::InvalidArgument("component index out of range".into()));
    }
    let sub = ZTrunc::new(ks.iter().map(|&k| trunc.components()[k]).collect())?;
    let map = sub.coords().iter().map(|&(k, j)| trunc.global_index(ks[k], j).expect("same spec")).collect();
    Ok((sub, map))
}

#[derive(Serialize, Deserialize)]
struct OperatorRepr {
    domain: ZTrunc,
    codomain: ZTrunc,
    /// `(k, j)` of every column, then every row.
    columns: Vec<(usize, usize)>,
    rows_index: Vec<(usize, usize)>,
    rows: Vec<Vec<f64>>,
}

impl Serialize for OperatorZ {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorRepr {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            columns: self.domain.coords().to_vec(),
            rows_index: self.codomain.coords().to_vec(),
            rows: self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OperatorZ {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = OperatorRepr::deserialize(deserializer)?;
        if r.columns != r.domain.coords() || r.rows_index != r.codomain.coords() {
            return Err(de::Error::custom("coordinate header does not match the spaces"));
        }
        if r.rows.iter().any(|row| row.len() != r.domain.dim()) {
            return Err(de::Error::custom("ragged operator rows"));
        }
        let nrows = r.rows.len();
        let matrix = DMatrix::from_row_iterator(nrows, r.domain.dim(), r.rows.into_iter().flatten());
        OperatorZ::new(r.domain, r.codomain, matrix).map_err(de::Error::custom)
    }
}

impl OperatorZ {
    /// Row-major CSV; the header binds each column to its `(k, j)` pair and
    /// the first two columns of each row give the row's pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row_k,row_j");
        for (k, j) in self.domain.coords() {
            out.push_str(&format!(",{k}:{j}"));
        }
        out.push('\n');
        for (r, (k, j)) in self.codomain.coords().iter().enumerate() {
            out.push_str(&format!("{k},{j}"));
            for v in self.matrix.row(r).iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn apply(t: &OperatorZ, v: &ZVector) -> Result<ZVector> {
    let x = v.to_coords(&t.domain)?;
    ZVector::from_coords(&t.codomain, &t.apply_coords(&x))
}

/// `min_n |e*_n(T e_n)|`.
pub fn diagonal_delta(t: &OperatorZ) -> f64 {
    t.matrix.diagonal().iter().fold(f64::INFINITY, |a, d| a.min(d.abs()))
}

/// Exact test: every off-diagonal entry is zero.
pub fn is_diagonal(t: &OperatorZ) -> bool {
    t.matrix.nrows() == t.matrix.ncols()
        && t.matrix.row_iter().enumerate().all(|(r, row)| row.iter().enumerate().all(|(c, v)| r == c || *v == 0.0))
}

/// `I = B D A` with `A = I` and `B = D^{-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalFactors {
    pub a: OperatorZ,
    pub b: OperatorZ,
}

pub fn diagonal_factorization(d: &OperatorZ, delta: f64) -> Result<DiagonalFactors> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !d.is_endo() || !is_diagonal(d) {
        return Err(Error::Precondition("diagonal factorization needs a diagonal endomorphism".into()));
    }
    let diag = d.diagonal();
    if let Some((n, v)) = diag.iter().enumerate().find(|(_, v)| v.abs() < delta) {
        return Err(Error::Precondition(format!("|d_{n}| = {} is below delta = {delta}", v.abs())));
    }
    let inv: Vec<f64> = diag.iter().map(|v| 1.0 / v).collect();
    Ok(DiagonalFactors { a: OperatorZ::identity(&d.domain), b: OperatorZ::from_diagonal(&d.domain, &inv)? })
}

/// Fixture generator: diagonal entries `±δ(1 + U[0,1))` with random signs,
/// off-diagonal entries uniform in `[-off_diag_scale, off_diag_scale]`.
pub fn random_large_diagonal(trunc: &ZTrunc, delta: f64, off_diag_scale: f64, seed: u64) -> Result<OperatorZ> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !(off_diag_scale >= 0.0) || !off_diag_scale.is_finite() {
        return Err(Error::InvalidArgument(format!("off-diagonal scale must be non-negative, got {off_diag_scale}")));
    }
    let n = trunc.dim();
    let mut r = rng::seeded(seed);
    let mut m = DMatrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            m[(row, col)] = if row == col {
                let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * delta * (1.0 + r.random::<f64>())
            } else if off_diag_scale > 0.0 {
                r.random_range(-off_diag_scale..=off_diag_scale)
            } else {
                0.0
            };
        }
    }
    OperatorZ::endo(trunc.clone(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{SpaceKind, SpaceSpec};
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn trunc3() -> ZTrunc {
        ZTrunc::new(vec![
            SpaceSpec::hp(2.0, 2).unwrap(),
            SpaceSpec::hp(3.0, 2).unwrap(),
            SpaceSpec::new(SpaceKind::HpHq { p: 1.5, q: 3.0 }, 1).unwrap(),
        ])
        .unwrap()
    }

    fn random_vec(t: &ZTrunc, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..t.dim()).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn apply_identity_and_zero() {
        let t = trunc3();
        let v = ZVector::from_coords(&t, &random_vec(&t, 1)).unwrap();
        assert_eq!(apply(&OperatorZ::identity(&t), &v).unwrap(), v);
        let z = apply(&OperatorZ::zeros(&t, &t), &v).unwrap();
        assert_eq!(z, ZVector::zeros(&t));
    }

    #[test]
    fn apply_is_linear() {
        let t = trunc3();
        let op = random_large_diagonal(&t, 0.5, 0.2, 3).unwrap();
        let (x, y) = (random_vec(&t, 4), random_vec(&t, 5));
        let s = 1.7;
        let lhs = op.apply_coords(&x.iter().zip(&y).map(|(a, b)| s * a + b).collect::<Vec<_>>());
        let (tx, ty) = (op.apply_coords(&x), op.apply_coords(&y));
        for (n, l) in lhs.iter().enumerate() {
            // coordinate expansion oracle
            let direct: f64 = (0..t.dim()).map(|c| op.entry(n, c) * (s * x[c] + y[c])).sum();
            assert!((l - direct).abs() < 1e-12);
            assert!((l - (s * tx[n] + ty[n])).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_examples() {
        let t = trunc3();
        let two = OperatorZ::from_diagonal(&t, &vec![2.0; t.dim()]).unwrap();
        assert_eq!(diagonal_delta(&two), 2.0);
        let mut d = vec![1.0; t.dim()];
        d[4] = 0.0;
        assert_eq!(diagonal_delta(&OperatorZ::from_diagonal(&t, &d).unwrap()), 0.0);
        let op = random_large_diagonal(&t, 0.3, 0.5, 8).unwrap();
        let scan = (0..t.dim()).map(|n| op.entry(n, n).abs()).fold(f64::INFINITY, f64::min);
        assert_eq!(diagonal_delta(&op), scan);
    }

    #[test]
    fn diagonal_detection() {
        let t = trunc3();
        assert!(is_diagonal(&OperatorZ::identity(&t)));
        let mut m = DMatrix::identity(t.dim(), t.dim());
        m[(0, 3)] = 1e-3;
        assert!(!is_diagonal(&OperatorZ::endo(t.clone(), m).unwrap()));
        for seed in 0..20 {
            let d = random_vec(&t, seed);
            assert!(is_diagonal(&OperatorZ::from_diagonal(&t, &d).unwrap()));
        }
    }

    #[test]
    fn diagonal_factorization_examples() {
        let t = trunc3();
        let d = OperatorZ::from_diagonal(&t, &vec![2.0; t.dim()]).unwrap();
        let f = diagonal_factorization(&d, 2.0).unwrap();
        let prod = f.b.compose(&d).unwrap().compose(&f.a).unwrap();
        assert_eq!(prod.matrix(), &DMatrix::identity(t.dim(), t.dim()));
        assert!(f.b.diagonal().iter().all(|v| *v == 0.5));
        assert!(diagonal_factorization(&d, 0.0).is_err());
        assert!(diagonal_factorization(&d, 2.5).is_err());
        let off = random_large_diagonal(&t, 0.5, 0.1, 1).unwrap();
        assert!(matches!(diagonal_factorization(&off, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn random_fixture_properties() {
        let t = trunc3();
        assert!(is_diagonal(&random_large_diagonal(&t, 0.5, 0.0, 2).unwrap()));
        for seed in 0..10 {
            let op = random_large_diagonal(&t, 0.5, 0.01, seed).unwrap();
            assert!(diagonal_delta(&op) >= 0.5);
            assert!(op.matrix().iter().enumerate().all(|(i, v)| i % (t.dim() + 1) == 0 || v.abs() <= 0.01));
            assert_eq!(op, random_large_diagonal(&t, 0.5, 0.01, seed).unwrap());
        }
        let signs: BTreeSet<bool> =
            random_large_diagonal(&t, 0.5, 0.0, 4).unwrap().diagonal().iter().map(|d| *d > 0.0).collect();
        assert_eq!(signs.len(), 2);
    }

    #[test]
    fn restrict_matches_projection() {
        let t = trunc3();
        let op = random_large_diagonal(&t, 0.5, 0.3, 6).unwrap();
        let rows: BTreeSet<usize> = [1].into();
        let cols: BTreeSet<usize> = [0, 2].into();
        let r = op.restrict(&rows, &cols).unwrap();
        for (m, &(rk, rj)) in r.codomain().coords().iter().enumerate() {
            for (n, &(ck, cj)) in r.domain().coords().iter().enumerate() {
                let gm = t.global_index([1][rk], rj).unwrap();
                let gn = t.global_index([0, 2][ck], cj).unwrap();
                assert_eq!(r.entry(m, n), op.entry(gm, gn));
            }
        }
    }

    #[test]
    fn json_round_trip_and_csv_header() {
        let t = ZTrunc::new(vec![SpaceSpec::hp(2.0, 1).unwrap()]).unwrap();
        let op = random_large_diagonal(&t, 0.5, 0.1, 9).unwrap();
        let s = serde_json::to_string(&op).unwrap();
        assert_eq!(serde_json::from_str::<OperatorZ>(&s).unwrap(), op);
        let csv = op.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "row_k,row_j,0:1,0:2,0:3");
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
    }

    proptest! {
        #[test]
        fn analytic_upper_dominates_sampled_ratios(seed in 0u64..200) {
            let t = trunc3();
            let op = random_large_diagonal(&t, 0.5, 0.2, seed).unwrap();
            let ub = op.analytic_upper();
            let x = random_vec(&t, seed + 1000);
            let ratio = t.norm_of_coords(&op.apply_coords(&x)) / t.norm_of_coords(&x);
            prop_assert!(ratio <= ub + 1e-12);
        }
    }
}
