//! Choice of the signs `ε` in `x_n = Σ ε_i λ_i e_i`, `x*_n = Σ ε_i μ_i e*_i`.
//!
//! With `M_ij = μ_i λ_j T_ij` the pairing is `x*_n(T x_n) = Σ_ij ε_i ε_j M_ij`.
//! Averaged over independent uniform signs the cross terms vanish, so the
//! mean is `Σ_i μ_i λ_i T_ii`. Small supports are searched exhaustively;
//! larger ones fix signs one at a time without letting the conditional mean
//! drop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OperatorZ;
use crate::sumspace::ZTrunc;

/// Largest support searched exhaustively.
pub const EXHAUSTIVE_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignChoice {
    pub signs: Vec<i8>,
    /// `x*_n(T x_n)` for the chosen signs.
    pub value: f64,
    /// `Σ μ_i λ_i T_ii`, the mean over all sign patterns.
    pub mean: f64,
    pub exhaustive: bool,
}

/// The matrix `M_ij = μ_i λ_j T_(g_i, g_j)` on the support.
pub fn pairing_matrix(t: &OperatorZ, trunc: &ZTrunc, host: usize, support: &[usize], lambda: &[f64], mu: &[f64]) -> Result<Vec<Vec<f64>>> {
    if lambda.len() != support.len() || mu.len() != support.len() {
        return Err(Error::ShapeMismatch { expected: support.len(), found: lambda.len().min(mu.len()) });
    }
    if t.domain() != trunc || t.codomain() != trunc {
        return Err(Error::DimensionMismatch("operator does not act on the given truncation".into()));
    }
    let g: Vec<usize> = support
        .iter()
        .map(|&i| {
            trunc
                .global_index(host, i)
                .ok_or_else(|| Error::InvalidArgument(format!("ordinal {i} outside component {host}")))
        })
        .collect::<Result<_>>()?;
    Ok((0..g.len()).map(|a| (0..g.len()).map(|b| mu[a] * lambda[b] * t.entry(g[a], g[b])).collect()).collect())
}

/// `Σ_ij ε_i ε_j M_ij`.
pub fn signed_value(m: &[Vec<f64>], signs: &[i8]) -> f64 {
    let mut v = 0.0;
    for (i, row) in m.iter().enumerate() {
        let si = f64::from(signs[i]);
        for (j, mij) in row.iter().enumerate() {
            v += si * f64::from(signs[j]) * mij;
        }
    }
    v
}

/// Signs with `|x*_n(T x_n)| >= |Σ μ_i λ_i T_ii|`; the latter must exceed
/// `(1 - η) δ`.
pub fn sign_selection(
    t: &OperatorZ,
    trunc: &ZTrunc,
    host: usize,
    support: &[usize],
    lambda: &[f64],
    mu: &[f64],
    delta: f64,
    eta: f64,
) -> Result<SignChoice> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    let m = pairing_matrix(t, trunc, host, support, lambda, mu)?;
    let diag_sign = |i: usize| t.entry(trunc.global_index(host, support[i]).unwrap(), trunc.global_index(host, support[i]).unwrap()).signum();
    let s0 = diag_sign(0);
    if s0 == 0.0 || (1..support.len()).any(|i| diag_sign(i) != s0) {
        return Err(Error::Precondition("diagonal entries over the support do not share one sign".into()));
    }
    let mean: f64 = (0..m.len()).map(|i| m[i][i]).sum();
    if !(mean.abs() > (1.0 - eta) * delta) {
        return Err(Error::Precondition(format!(
            "|Σ λμ T_ii| = {} does not exceed (1 - η)δ = {}",
            mean.abs(),
            (1.0 - eta) * delta
        )));
    }
    let (signs, exhaustive) =
        if m.len() <= EXHAUSTIVE_MAX { (exhaustive_best(&m), true) } else { (derandomized(&m, s0), false) };
    let value = signed_value(&m, &signs);
    Ok(SignChoice { signs, value, mean, exhaustive })
}

/// Gray-code walk over patterns with `ε_0 = +1` (the value is even in `ε`).
fn exhaustive_best(m: &[Vec<f64>]) -> Vec<i8> {
    let n = m.len();
    let mut eps = vec![1i8; n];
    // r_k = Σ_{j≠k} ε_j (M_kj + M_jk)
    let sym = |k: usize, j: usize| m[k][j] + m[j][k];
    let mut r: Vec<f64> = (0..n).map(|k| (0..n).filter(|&j| j != k).map(|j| sym(k, j)).sum()).collect();
    let mut value = signed_value(m, &eps);
    let mut best = (value.abs(), eps.clone());
    for step in 1u64..(1u64 << (n - 1)) {
        // flip position 1 + (index of the lowest set bit)
        let k = 1 + step.trailing_zeros() as usize;
        let ek = f64::from(eps[k]);
        value -= 2.0 * ek * r[k];
        eps[k] = -eps[k];
        for j in 0..n {
            if j != k {
                r[j] -= 2.0 * ek * sym(j, k);
            }
        }
        if value.abs() > best.0 {
            best = (value.abs(), eps.clone());
        }
    }
    best.1
}

/// Method of conditional expectations on `s · v(ε)` with `s` the sign of the
/// mean: fixing `ε_k` adds `ε_k Σ_{j<k} ε_j (M_kj + M_jk)` to the conditional
/// mean, so choosing the sign of that sum never lowers it.
fn derandomized(m: &[Vec<f64>], s: f64) -> Vec<i8> {
    let mut eps: Vec<i8> = Vec::with_capacity(m.len());
    for k in 0..m.len() {
        let c: f64 = (0..k).map(|j| f64::from(eps[j]) * (m[k][j] + m[j][k])).sum();
        eps.push(if s * c >= 0.0 { 1 } else { -1 });
    }
    eps
}
