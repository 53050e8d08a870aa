//! Play the reproduction game and inspect the transcript.

use haarfactor::blocks::Branch;
use haarfactor::funcspace::SpaceSpec;
use haarfactor::game::{run_default_game, GameConfig, OperatorSource};
use haarfactor::sumspace::ZTrunc;

fn main() -> haarfactor::Result<()> {
    let big = ZTrunc::new(vec![SpaceSpec::hp(2.0, 5)?, SpaceSpec::hp(1.5, 5)?])?;
    let small = ZTrunc::new(vec![SpaceSpec::hp(2.0, 2)?, SpaceSpec::hp(1.5, 2)?])?;
    let op = OperatorSource::RandomLargeDiagonal { delta: 0.5, off_diag: 0.005, seed: 11 };
    let cfg = GameConfig::new(big.clone(), small, op, 0.1, Branch::Full, 4);
    let t = cfg.operator.build(&big)?;
    let (tr, blocks) = run_default_game(&t, &cfg).map_err(|a| a.error)?;

    println!(" n  (k,j)  host  |E|  relax        covered  x*(Tx)");
    for r in &tr.turns {
        println!(
            "{:>2}  {:?}  {:>4}  {:>3}  {:<11}  {:.4}   {:.4}",
            r.turn,
            r.small,
            r.host,
            r.player_two.support.len(),
            format!("{:?}", r.player_two.relaxation),
            r.player_two.covered_measure,
            r.value
        );
    }
    println!("blocks: {}, closing tails {:?}", blocks.len(), tr.closing_tails);
    if let Some(p) = &tr.postgame {
        println!("relaxed turns {}, max interaction {:.3e}", p.relaxed_turns, p.max_past_interaction.max(p.max_future_interaction));
    }
    Ok(())
}
