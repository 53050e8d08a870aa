//! Witnessed lower bounds for operator norms between ℓ∞-sums.
//!
//! Norms between non-Euclidean spaces are not computable exactly, so the
//! search returns a value attained by an explicit vector (a certified lower
//! bound), a locally refined value, and the analytic upper bound from
//! [`OperatorZ::analytic_upper`].

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OperatorZ;
use crate::error::{Error, Result};
use crate::rng;
use crate::sumspace::ZTrunc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    /// `‖T w‖ / ‖w‖` for the stored witness `w`.
    pub certified_lower: f64,
    /// Best ratio after local refinement; never below `certified_lower`.
    pub heuristic_value: f64,
    /// Unit vector (normalized coordinates) attaining `certified_lower`.
    pub witness: Vec<f64>,
    pub analytic_upper: f64,
}

/// Tuning of the multi-start coordinate ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSearch {
    /// Random starts on the product of component spheres.
    pub trials: usize,
    pub seed: u64,
    /// How many of the best basis vectors also seed an ascent.
    pub basis_starts: usize,
    pub initial_step: f64,
    /// The coarse phase stops when the step drops below this.
    pub coarse_min_step: f64,
    /// The refinement phase stops when the step drops below this.
    pub fine_min_step: f64,
    pub max_sweeps: usize,
}

impl NormSearch {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            basis_starts: 2,
            initial_step: 0.5,
            coarse_min_step: 1.0 / 8.0,
            fine_min_step: 1.0 / 64.0,
            max_sweeps: 8,
        }
    }
}

pub fn operator_norm_bounds(t: &OperatorZ, trials: usize, seed: u64) -> Result<NormBounds> {
    operator_norm_bounds_with(t, &NormSearch::new(trials, seed))
}

pub fn operator_norm_bounds_with(t: &OperatorZ, cfg: &NormSearch) -> Result<NormBounds> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("norm search needs at least one trial".into()));
    }
    let analytic_upper = t.analytic_upper();
    let n = t.domain().dim();
    if n == 0 || t.max_abs() == 0.0 {
        let mut witness = vec![0.0; n];
        if n > 0 {
            witness[0] = 1.0;
        }
        return Ok(NormBounds { certified_lower: 0.0, heuristic_value: 0.0, witness, analytic_upper });
    }
    let search = Search::new(t);

    // every basis vector is a unit witness
    let basis: Vec<f64> = (0..n).into_par_iter().map(|c| search.column_ratio(c)).collect();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| basis[b].total_cmp(&basis[a]).then(a.cmp(&b)));

    let mut starts: Vec<Vec<f64>> = ranked
        .iter()
        .take(cfg.basis_starts)
        .map(|&c| {
            let mut x = vec![0.0; n];
            x[c] = 1.0;
            x
        })
        .collect();
    for trial in 0..cfg.trials {
        starts.push(search.random_start(cfg.seed, trial as u64));
    }

    let results: Vec<(f64, Vec<f64>)> =
        starts.into_par_iter().map(|x| search.ascend(x, cfg.initial_step, cfg.coarse_min_step, cfg.max_sweeps)).collect();

    // deterministic reduction: max value, ties to the lowest start
    let mut best = (basis[ranked[0]], {
        let mut x = vec![0.0; n];
        x[ranked[0]] = 1.0;
        x
    });
    for (v, x) in results {
        if v > best.0 {
            best = (v, x);
        }
    }
    let (certified_lower, witness) = search.exact_ratio(best.1);
    let (refined, _) = search.ascend(witness.clone(), cfg.coarse_min_step, cfg.fine_min_step, cfg.max_sweeps);
    Ok(NormBounds {
        certified_lower,
        heuristic_value: refined.max(certified_lower),
        witness,
        analytic_upper,
    })
}

struct Search<'a> {
    t: &'a OperatorZ,
    dom: &'a ZTrunc,
    cod: &'a ZTrunc,
    /// component of every domain coordinate
    comp_of: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(t: &'a OperatorZ) -> Self {
        let dom = t.domain();
        let comp_of = dom.coords().iter().map(|&(k, _)| k).collect();
        Self { t, dom, cod: t.codomain(), comp_of }
    }

    fn column_ratio(&self, c: usize) -> f64 {
        let col: Vec<f64> = self.t.matrix().column(c).iter().copied().collect();
        let mut x = vec![0.0; self.dom.dim()];
        x[c] = 1.0;
        self.cod.norm_of_coords(&col) / self.dom.norm_of_coords(&x)
    }

    fn random_start(&self, seed: u64, trial: u64) -> Vec<f64> {
        let mut r = rng::substream(seed, trial);
        let mut x: Vec<f64> = (0..self.dom.dim()).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        for k in 0..self.dom.len() {
            let nk = self.dom.component_norm(k, &x);
            if nk > 0.0 {
                for &g in self.dom.component_positions(k) {
                    x[g] /= nk;
                }
            }
        }
        x
    }

    /// Rescale to unit norm and recompute the ratio from scratch.
    fn exact_ratio(&self, mut x: Vec<f64>) -> (f64, Vec<f64>) {
        let nx = self.dom.norm_of_coords(&x);
        if nx == 0.0 {
            return (0.0, x);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let tx = self.t.apply_coords(&x);
        (self.cod.norm_of_coords(&tx) / self.dom.norm_of_coords(&x), x)
    }

    /// Coordinate ascent of `‖T x‖ / ‖x‖`: each coordinate tries `±step` and
    /// a sign flip; the step halves after a sweep without improvement.
    fn ascend(&self, x0: Vec<f64>, initial_step: f64, min_step: f64, max_sweeps: usize) -> (f64, Vec<f64>) {
        let (mut value, mut x) = self.exact_ratio(x0);
        if value == 0.0 && x.iter().all(|v| *v == 0.0) {
            return (0.0, x);
        }
        let mut tx = self.t.apply_coords(&x);
        let mut xn: Vec<f64> = (0..self.dom.len()).map(|k| self.dom.component_norm(k, &x)).collect();
        let mut step = initial_step;
        let mut sweeps = 0;
        let mut trial_tx = vec![0.0; tx.len()];
        while step >= min_step && sweeps < max_sweeps {
            let mut improved = false;
            for i in 0..x.len() {
                let k = self.comp_of[i];
                let col = self.t.matrix().column(i);
                let old = x[i];
                for cand in [old + step, old - step, -old] {
                    if cand == old {
                        continue;
                    }
                    let d = cand - old;
                    for ((o, a), c) in trial_tx.iter_mut().zip(&tx).zip(col.iter()) {
                        *o = a + d * c;
                    }
                    x[i] = cand;
                    let nk = self.dom.component_norm(k, &x);
                    let nx = xn.iter().enumerate().map(|(l, v)| if l == k { nk } else { *v }).fold(0.0, f64::max);
                    let ratio = if nx > 0.0 { self.cod.norm_of_coords(&trial_tx) / nx } else { 0.0 };
                    if ratio > value * (1.0 + 1e-12) {
                        value = ratio;
                        xn[k] = nk;
                        std::mem::swap(&mut tx, &mut trial_tx);
                        improved = true;
                        break;
                    }
                    x[i] = old;
                }
            }
            sweeps += 1;
            if !improved {
                step /= 2.0;
            }
            // keep the iterate on the unit sphere so steps stay relative
            let nx = xn.iter().copied().fold(0.0, f64::max);
            if nx > 0.0 {
                x.iter_mut().for_each(|v| *v /= nx);
                tx.iter_mut().for_each(|v| *v /= nx);
                xn.iter_mut().for_each(|v| *v /= nx);
            }
        }
        self.exact_ratio(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{SpaceKind, SpaceSpec};
    use crate::operators::{diagonal_factorization, random_large_diagonal};
    use nalgebra::DMatrix;

    fn hilbert3() -> ZTrunc {
        ZTrunc::new(vec![SpaceSpec::hp(2.0, 0).unwrap(); 3]).unwrap()
    }

    #[test]
    fn diagonal_example_is_exact() {
        let t = hilbert3();
        let op = OperatorZ::from_diagonal(&t, &[1.0, -2.0, 0.5]).unwrap();
        let b = operator_norm_bounds(&op, 2, 1).unwrap();
        assert!((b.certified_lower - 2.0).abs() < 1e-12);
        assert!(b.heuristic_value >= b.certified_lower);
        assert_eq!(b.analytic_upper, 2.0);
        assert!((t.norm_of_coords(&b.witness) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_zero() {
        let t = crate::operators::tests::trunc3();
        let id = operator_norm_bounds(&OperatorZ::identity(&t), 1, 0).unwrap();
        assert!((id.certified_lower - 1.0).abs() < 1e-12);
        let zero = operator_norm_bounds(&OperatorZ::zeros(&t, &t), 1, 0).unwrap();
        assert_eq!(zero.certified_lower, 0.0);
        assert!(operator_norm_bounds(&OperatorZ::identity(&t), 0, 0).is_err());
    }

    #[test]
    fn diagonal_norms_exact_on_unconditional_components() {
        let t = crate::operators::tests::trunc3();
        for seed in 0..5 {
            let op = random_large_diagonal(&t, 0.3, 0.0, seed).unwrap();
            let exact = op.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs()));
            let b = operator_norm_bounds(&op, 1, seed).unwrap();
            assert!((b.certified_lower - exact).abs() < 1e-9);
            assert!(b.certified_lower <= b.analytic_upper + 1e-12);
        }
    }

    #[test]
    fn witness_reproduces_certified_value() {
        let t = crate::operators::tests::trunc3();
        let op = random_large_diagonal(&t, 0.5, 0.2, 3).unwrap();
        let b = operator_norm_bounds(&op, 2, 5).unwrap();
        let ratio = t.norm_of_coords(&op.apply_coords(&b.witness)) / t.norm_of_coords(&b.witness);
        assert_eq!(ratio, b.certified_lower);
        assert!(b.certified_lower <= b.analytic_upper);
    }

    #[test]
    fn deterministic_given_seed() {
        let t = crate::operators::tests::trunc3();
        let op = random_large_diagonal(&t, 0.5, 0.2, 3).unwrap();
        assert_eq!(operator_norm_bounds(&op, 3, 5).unwrap(), operator_norm_bounds(&op, 3, 5).unwrap());
    }

    #[test]
    fn inverse_diagonal_bound() {
        let t = ZTrunc::new(vec![SpaceSpec::new(SpaceKind::Vmo, 2).unwrap(), SpaceSpec::hp(1.5, 2).unwrap()]).unwrap();
        let mut d: Vec<f64> = (0..t.dim()).map(|i| if i % 2 == 0 { 0.7 } else { -1.3 }).collect();
        d[3] = -0.25;
        let op = OperatorZ::from_diagonal(&t, &d).unwrap();
        let f = diagonal_factorization(&op, 0.25).unwrap();
        let b = operator_norm_bounds(&f.b, 1, 0).unwrap();
        assert!((b.certified_lower - 4.0).abs() < 1e-9);
        assert!(b.certified_lower <= 1.0 / 0.25 + 1e-9);
    }

    #[test]
    fn ascent_beats_basis_vectors_on_dense_matrix() {
        // all-ones matrix on a Hilbert sum: ‖T‖ = n, basis vectors give √n
        let t = ZTrunc::new(vec![SpaceSpec::hp(2.0, 1).unwrap()]).unwrap();
        let op = OperatorZ::endo(t.clone(), DMatrix::from_element(3, 3, 1.0)).unwrap();
        let b = operator_norm_bounds(&op, 2, 0).unwrap();
        assert!(b.certified_lower > 3f64.sqrt() + 0.5);
        assert!(b.certified_lower <= 3.0 + 1e-12);
    }
}
