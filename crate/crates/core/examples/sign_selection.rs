//! Choosing signs so that x*(T x) is at least the diagonal average.

use haarfactor::funcspace::SpaceSpec;
use haarfactor::game::sign_selection;
use haarfactor::operators::OperatorZ;
use haarfactor::sumspace::ZTrunc;
use nalgebra::DMatrix;

fn main() -> haarfactor::Result<()> {
    let z = ZTrunc::new(vec![SpaceSpec::hp(2.0, 4)?])?;
    let n = z.dim();
    // positive diagonal, a strong negative coupling between neighbours
    let m = DMatrix::from_fn(n, n, |r, c| match r.abs_diff(c) {
        0 => 1.0,
        1 => -0.3,
        _ => 0.0,
    });
    let t = OperatorZ::endo(z.clone(), m)?;
    for size in [4, 12, 30] {
        let support: Vec<usize> = (1..=size).collect();
        let lambda = vec![1.0 / size as f64; size];
        let mu = vec![1.0; size];
        let c = sign_selection(&t, &z, 0, &support, &lambda, &mu, 1.0, 0.1)?;
        let flips = c.signs.iter().filter(|&&s| s < 0).count();
        println!(
            "|E| = {size:>2}: mean {:.4}  chosen {:.4}  negative signs {flips}  ({})",
            c.mean,
            c.value,
            if c.exhaustive { "exhaustive" } else { "derandomized" }
        );
    }
    Ok(())
}
