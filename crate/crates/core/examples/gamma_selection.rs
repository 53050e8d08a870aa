//! Greedy selection of components Gamma meeting every class Omega_l while
//! keeping the off-diagonal part small on Z_Gamma.

use std::collections::BTreeSet;

use haarfactor::funcspace::SpaceSpec;
use haarfactor::operators::{select_gamma, OperatorZ};
use haarfactor::sumspace::ZTrunc;
use nalgebra::DMatrix;

fn main() -> haarfactor::Result<()> {
    let z = ZTrunc::new((0..6).map(|_| SpaceSpec::hp(2.0, 0)).collect::<Result<Vec<_>, _>>()?)?;
    // neighbouring components interact, so Gamma should avoid adjacent pairs
    let s = DMatrix::from_fn(6, 6, |r, c| if r.abs_diff(c) == 1 { 0.5 } else { 0.0 });
    let s = OperatorZ::endo(z, s)?;
    let omegas: Vec<BTreeSet<usize>> = vec![[0, 1, 2].into(), [3, 4, 5].into()];
    let sel = select_gamma(&s, &omegas, 0.05, 2, 0)?;
    println!("Gamma = {:?}", sel.gamma);
    for step in &sel.steps {
        println!("  Omega_{} -> {}  (row norm >= {:.3})", step.omega, step.chosen, step.row_norm_lower);
    }
    println!("||P_G S|_Z_G||: lower {:.3}, upper {:.3}; target 2||S|| + rho = {:.3}", sel.bound_lower, sel.bound_upper, sel.target);
    Ok(())
}
