//! Greedy choice of a component set `Γ` on which `P_Γ S|_{Z_Γ}` is small
//! while `Γ` meets every prescribed class `Ω_l`.
//!
//! The classes are visited round-robin. At each visit the component whose
//! row block has the smallest witnessed norm against the current pool is
//! added, and the pool drops components that interact with it by more than
//! `ρ/2`, unless that would empty some class.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{operator_norm_bounds_with, NormBounds, NormSearch, OperatorZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaStep {
    pub omega: usize,
    pub chosen: usize,
    /// Witnessed lower bound of `‖P_γ S|_{Z_{Γ ∪ pool}}‖` for the chosen `γ`.
    pub row_norm_lower: f64,
    pub pool_after: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub gamma: BTreeSet<usize>,
    pub steps: Vec<GammaStep>,
    /// Analytic upper bound of `‖P_Γ S|_{Z_Γ}‖`.
    pub bound_upper: f64,
    /// Witnessed lower bound of the same norm.
    pub bound_lower: f64,
    pub s_norm: NormBounds,
    /// `2‖S‖ + ρ` with `‖S‖` replaced by its witnessed lower bound.
    pub target: f64,
    /// `‖S‖ + ρ`, the single-row bound from the same argument.
    pub target_single_row: f64,
}

/// Upper bound for the block `P_k S P_c`.
fn block_upper(s: &OperatorZ, k: usize, c: usize) -> Result<f64> {
    Ok(s.restrict(&[k].into(), &[c].into())?.analytic_upper())
}

pub fn select_gamma(
    s: &OperatorZ,
    omegas: &[BTreeSet<usize>],
    rho: f64,
    budget: usize,
    seed: u64,
) -> Result<GammaSelection> {
    if !s.is_endo() {
        return Err(Error::Precondition("Γ-selection needs an endomorphism".into()));
    }
    let k_count = s.domain().len();
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if budget == 0 || budget > k_count {
        return Err(Error::InvalidArgument(format!("budget must lie in 1..={k_count}, got {budget}")));
    }
    if omegas.is_empty() {
        return Err(Error::Infeasible("no constraint classes given".into()));
    }
    for (l, om) in omegas.iter().enumerate() {
        if om.is_empty() {
            return Err(Error::Infeasible(format!("class Ω_{l} is empty")));
        }
        if om.iter().any(|&k| k >= k_count) {
            return Err(Error::Infeasible(format!("class Ω_{l} names a component outside 0..{k_count}")));
        }
    }
    let mut search = NormSearch::new(1, seed);
    search.basis_starts = 1;
    search.max_sweeps = 4;

    let mut interaction = vec![vec![0.0; k_count]; k_count];
    for (k, row) in interaction.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = block_upper(s, k, c)?;
        }
    }

    let mut pool: BTreeSet<usize> = (0..k_count).collect();
    let mut gamma = BTreeSet::new();
    let mut steps = Vec::new();
    let mut visit = 0usize;
    let mut idle = 0usize;
    while gamma.len() < budget && idle < omegas.len() {
        let l = visit % omegas.len();
        visit += 1;
        let cands: Vec<usize> = omegas[l].iter().filter(|c| pool.contains(c) && !gamma.contains(*c)).copied().collect();
        if cands.is_empty() {
            idle += 1;
            continue;
        }
        idle = 0;
        let cols: BTreeSet<usize> = gamma.union(&pool).copied().collect();
        let mut best: Option<(f64, usize)> = None;
        for &c in &cands {
            let row = s.restrict(&[c].into(), &cols)?;
            let v = operator_norm_bounds_with(&row, &search)?.certified_lower;
            if best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, c));
            }
        }
        let (row_norm_lower, chosen) = best.expect("nonempty candidates");
        gamma.insert(chosen);

        // prune the pool, worst interactions first
        let mut others: Vec<usize> = pool.iter().filter(|d| !gamma.contains(*d)).copied().collect();
        let weight = |d: usize| interaction[chosen][d].max(interaction[d][chosen]);
        others.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));
        for d in others {
            if weight(d) <= rho / 2.0 {
                continue;
            }
            let mut trial = pool.clone();
            trial.remove(&d);
            if omegas.iter().all(|om| om.iter().any(|k| trial.contains(k))) {
                pool = trial;
            }
        }
        steps.push(GammaStep { omega: l, chosen, row_norm_lower, pool_after: pool.iter().copied().collect() });
    }

    let bound_upper = gamma
        .iter()
        .map(|&k| gamma.iter().map(|&c| interaction[k][c]).sum::<f64>())
        .fold(0.0, f64::max)
        .min(s.restrict(&gamma, &gamma)?.analytic_upper());
    let bound_lower = operator_norm_bounds_with(&s.restrict(&gamma, &gamma)?, &search)?.certified_lower;
    let s_norm = operator_norm_bounds_with(s, &search)?;
    Ok(GammaSelection {
        gamma,
        steps,
        bound_upper,
        bound_lower,
        target: 2.0 * s_norm.certified_lower + rho,
        target_single_row: s_norm.certified_lower + rho,
        s_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::SpaceSpec;
    use crate::operators::random_large_diagonal;
    use crate::sumspace::ZTrunc;
    use nalgebra::DMatrix;

    fn trunc(k: usize) -> ZTrunc {
        ZTrunc::new(vec![SpaceSpec::hp(2.0, 1).unwrap(); k]).unwrap()
    }

    fn classes(k: usize) -> Vec<BTreeSet<usize>> {
        vec![(0..k).step_by(2).collect(), (1..k).step_by(2).collect()]
    }

    #[test]
    fn diagonal_and_zero_operators() {
        let t = trunc(4);
        let d = random_large_diagonal(&t, 0.5, 0.0, 1).unwrap();
        let sel = select_gamma(&d, &classes(4), 0.1, 3, 0).unwrap();
        let want = sel
            .gamma
            .iter()
            .map(|&k| t.component_positions(k).iter().map(|&g| d.entry(g, g).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!((sel.bound_upper - want).abs() < 1e-15);
        assert!(sel.bound_lower <= sel.bound_upper + 1e-12);
        let z = OperatorZ::zeros(&t, &t);
        let sel = select_gamma(&z, &classes(4), 0.1, 2, 0).unwrap();
        assert_eq!(sel.bound_upper, 0.0);
        assert_eq!(sel.bound_lower, 0.0);
    }

    #[test]
    fn every_visited_class_is_met() {
        let t = trunc(5);
        let s = random_large_diagonal(&t, 0.5, 0.05, 3).unwrap();
        let om = classes(5);
        let sel = select_gamma(&s, &om, 0.1, 4, 0).unwrap();
        assert!(!sel.gamma.is_empty() && sel.gamma.len() <= 4);
        assert_eq!(sel.steps.len(), sel.gamma.len());
        for o in &om {
            assert!(o.iter().any(|k| sel.gamma.contains(k)));
        }
    }

    #[test]
    fn infeasible_constraints_rejected() {
        let t = trunc(3);
        let s = OperatorZ::identity(&t);
        assert!(matches!(select_gamma(&s, &[BTreeSet::new()], 0.1, 1, 0), Err(Error::Infeasible(_))));
        assert!(matches!(select_gamma(&s, &[[7].into()], 0.1, 1, 0), Err(Error::Infeasible(_))));
        assert!(select_gamma(&s, &classes(3), 0.1, 4, 0).is_err());
    }

    /// Exhaustive oracle over all admissible Γ of the selected size.
    fn best_admissible(s: &OperatorZ, om: &[BTreeSet<usize>], size: usize) -> f64 {
        let k = s.domain().len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << k) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let g: BTreeSet<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
            if !om.iter().all(|o| o.iter().any(|i| g.contains(i))) {
                continue;
            }
            let v = g
                .iter()
                .map(|&r| g.iter().map(|&c| block_upper(s, r, c).unwrap()).sum::<f64>())
                .fold(0.0, f64::max);
            best = best.min(v);
        }
        best
    }

    #[test]
    fn huge_column_is_avoided() {
        for k in [4usize, 6, 8] {
            let t = trunc(k);
            let base = random_large_diagonal(&t, 0.5, 0.001, k as u64).unwrap();
            let mut m = base.matrix().clone();
            let bad = k - 1;
            let col = t.component_positions(bad)[0];
            for r in 0..t.dim() {
                if r != col {
                    m[(r, col)] = 50.0;
                }
            }
            let s = OperatorZ::endo(t.clone(), m).unwrap();
            let om: Vec<BTreeSet<usize>> = vec![(0..bad).step_by(2).collect(), (1..bad).step_by(2).collect()];
            let sel = select_gamma(&s, &om, 0.1, k - 1, 0).unwrap();
            assert!(!sel.gamma.contains(&bad));
            assert!(sel.bound_upper < 5.0, "bound {}", sel.bound_upper);
            let oracle = best_admissible(&s, &om, sel.gamma.len());
            // greedy is not optimal, but stays within the off-diagonal mass of the optimum
            assert!(sel.bound_upper <= oracle + 0.05, "{} vs {oracle}", sel.bound_upper);
            // every Γ containing the bad component is far worse
            let mut with_bad = sel.gamma.clone();
            with_bad.remove(sel.gamma.iter().next().unwrap());
            with_bad.insert(bad);
            let worse = with_bad
                .iter()
                .map(|&r| with_bad.iter().map(|&c| block_upper(&s, r, c).unwrap()).sum::<f64>())
                .fold(0.0, f64::max);
            assert!(worse > 10.0 * sel.bound_upper);
        }
    }

    #[test]
    fn reported_bound_dominates_post_hoc_witness() {
        let t = trunc(4);
        let mut m = DMatrix::from_fn(t.dim(), t.dim(), |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.01);
        for i in 0..t.dim() {
            m[(i, i)] = 1.0;
        }
        let s = OperatorZ::endo(t, m).unwrap();
        let sel = select_gamma(&s, &classes(4), 0.05, 3, 1).unwrap();
        let post = crate::operators::operator_norm_bounds(&s.restrict(&sel.gamma, &sel.gamma).unwrap(), 4, 9).unwrap();
        assert!(post.certified_lower <= sel.bound_upper + 1e-12);
    }
}
