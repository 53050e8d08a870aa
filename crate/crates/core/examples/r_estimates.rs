//! Lower max(2,p,q)- and upper min(2,p,q)-estimates for random blocks in
//! H^p(H^q), printed as the per-prefix table of the worst sequence.

use haarfactor::estimates::{check_block_estimate, random_blocks, BlockRecipe, Direction, Profile};
use haarfactor::funcspace::{SpaceKind, SpaceSpec};

fn main() -> haarfactor::Result<()> {
    let (p, q) = (1.5, 3.0);
    let spec = SpaceSpec::new(SpaceKind::HpHq { p, q }, 4)?;
    let recipe = BlockRecipe { count: 8, width: 12, profile: Profile::Gaussian, normalize: true };
    let (lower_r, upper_r) = (p.max(q).max(2.0), p.min(q).min(2.0));

    let mut worst = (f64::INFINITY, 0);
    for seed in 0..50 {
        let seq = random_blocks(&spec, &recipe, seed)?;
        let lo = check_block_estimate(&seq, Direction::Lower, lower_r, 1.0)?;
        let up = check_block_estimate(&seq, Direction::Upper, upper_r, 1.0)?;
        let m = lo.worst_margin.min(up.worst_margin);
        if m < worst.0 {
            worst = (m, seed);
        }
    }
    println!("H^{p}(H^{q}): worst margin over 50 sequences {:.3e} (seed {})", worst.0, worst.1);

    let seq = random_blocks(&spec, &recipe, worst.1)?;
    print!("{}", check_block_estimate(&seq, Direction::Lower, lower_r, 1.0)?.to_csv());
    Ok(())
}
