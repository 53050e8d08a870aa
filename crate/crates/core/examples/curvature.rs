//! Decay of averages of normalized blocks, with the fitted exponent.

use haarfactor::estimates::curvature_profile;
use haarfactor::funcspace::SpaceSpec;
use haarfactor::sumspace::ZTrunc;

fn main() -> haarfactor::Result<()> {
    for p in [1.5, 2.0, 3.0] {
        let array = ZTrunc::new(vec![SpaceSpec::hp(p, 6)?])?;
        let table = curvature_profile(&array, 64, 4, 1)?;
        let at = |n: usize| table.rows[n - 1].value;
        println!(
            "H^{p}: n=1 {:.4}  n=8 {:.4}  n=64 {:.4}  fitted exponent {:.3} (1 - 1/min(2,p) = {:.3})",
            at(1),
            at(8),
            at(64),
            table.exponent,
            1.0 - 1.0 / p.min(2.0)
        );
    }
    Ok(())
}
