//! Witnessed lower bounds and analytic upper bounds for operator norms on an
//! l-infinity sum.

use haarfactor::funcspace::{SpaceKind, SpaceSpec};
use haarfactor::operators::{operator_norm_bounds, random_large_diagonal, OperatorZ};
use haarfactor::sumspace::ZTrunc;

fn main() -> haarfactor::Result<()> {
    let z = ZTrunc::new(vec![SpaceSpec::hp(1.5, 3)?, SpaceSpec::new(SpaceKind::HpHq { p: 2.0, q: 3.0 }, 2)?])?;
    let diag: Vec<f64> = (0..z.dim()).map(|n| if n % 3 == 0 { -2.0 } else { 0.5 }).collect();
    let d = OperatorZ::from_diagonal(&z, &diag)?;
    let b = operator_norm_bounds(&d, 4, 0)?;
    println!("diagonal: lower {:.4} upper {:.4} (max |d| = 2)", b.certified_lower, b.analytic_upper);

    for off in [0.0, 0.01, 0.1] {
        let t = random_large_diagonal(&z, 0.5, off, 3)?;
        let b = operator_norm_bounds(&t, 4, 0)?;
        println!(
            "off-diagonal {off:<5}: certified {:.4}  refined {:.4}  upper {:.4}",
            b.certified_lower, b.heuristic_value, b.analytic_upper
        );
    }
    Ok(())
}
