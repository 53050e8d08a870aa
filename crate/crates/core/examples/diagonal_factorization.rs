//! I = B D A for a diagonal operator with |d_n| >= delta.

use haarfactor::funcspace::SpaceSpec;
use haarfactor::operators::{diagonal_factorization, operator_norm_bounds, OperatorZ};
use haarfactor::sumspace::ZTrunc;

fn main() -> haarfactor::Result<()> {
    let z = ZTrunc::new(vec![SpaceSpec::hp(2.0, 3)?, SpaceSpec::hp(3.0, 3)?])?;
    let delta = 0.25;
    let diag: Vec<f64> = (0..z.dim()).map(|n| if n % 2 == 0 { delta } else { -1.0 - n as f64 / 10.0 }).collect();
    let d = OperatorZ::from_diagonal(&z, &diag)?;
    let f = diagonal_factorization(&d, delta)?;
    let bda = f.b.compose(&d)?.compose(&f.a)?;
    let residual = bda.sub(&OperatorZ::identity(&z))?.max_abs();
    let nb = operator_norm_bounds(&f.b, 2, 0)?;
    println!("||BDA - I||_max = {residual:e}");
    println!("||B|| certified lower {:.4} <= 1/delta = {}", nb.certified_lower, 1.0 / delta);
    Ok(())
}
