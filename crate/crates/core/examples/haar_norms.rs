//! Norms of Haar functions and of a small expansion in several spaces.

use haarfactor::dyadic::{DyadicInterval, DyadicRect, HaarIndex};
use haarfactor::funcspace::{norm, HaarExpansion, SpaceKind, SpaceSpec};

fn main() -> haarfactor::Result<()> {
    let i = DyadicInterval::new(2, 1)?;
    for p in [1.0, 1.5, 2.0, 3.0] {
        let spec = SpaceSpec::hp(p, 4)?;
        let h = HaarExpansion::single(spec.dim(), spec.depth, HaarIndex::One(i))?;
        println!("||h_[1/4,1/2)||_H^{p} = {:.6}  (|I|^(1/p) = {:.6})", norm(&spec, &h)?, i.measure().powf(1.0 / p));
    }

    // h_[0,1) + h_[0,1/2): the square function is sqrt(2) on [0,1/2) and 1 elsewhere
    let spec = SpaceSpec::hp(2.0, 3)?;
    let mut f = HaarExpansion::zeros(spec.dim(), spec.depth)?;
    f.add(&HaarIndex::One(DyadicInterval::unit()), 1.0)?;
    f.add(&HaarIndex::One(DyadicInterval::new(1, 0)?), 1.0)?;
    println!("||h_0 + h_1||_H^2 = {:.6}  (sqrt(3/2) = {:.6})", norm(&spec, &f)?, 1.5f64.sqrt());

    let r = DyadicRect::new(DyadicInterval::new(1, 0)?, DyadicInterval::new(2, 3)?);
    for kind in [SpaceKind::HpHq { p: 3.0, q: 1.5 }, SpaceKind::LrLs { r: 2.0, s: 4.0 }, SpaceKind::VmoHr { r: 2.0 }] {
        let spec = SpaceSpec::new(kind, 3)?;
        let h = HaarExpansion::single(spec.dim(), spec.depth, HaarIndex::Two(r))?;
        println!("{:<12} ||h_R|| = {:.6}", kind.label(), norm(&spec, &h)?);
    }
    Ok(())
}
