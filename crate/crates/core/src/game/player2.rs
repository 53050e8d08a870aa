//! Faithful Haar copy: every node of the small Haar tree is copied onto a
//! family of ambient dyadic intervals whose union is the "+1" or "-1" half of
//! its parent's family, so the copied system has the same square-function
//! distribution as the original up to one global measure factor.
//!
//! One-parameter nodes refine their region until each piece is admissible
//! (ordinal above the floor, diagonal in the chosen sign class, unused);
//! pieces still inadmissible at the ambient depth are dropped and the loss is
//! recorded. Two-parameter nodes use product families of dilated copies along
//! each axis and drop inadmissible rectangles.

use std::collections::{BTreeMap, BTreeSet};

use super::{GameContext, PlayerIIMove, PlayerIMove, PlayerTwo, Policy, Relaxation, Turn};
use crate::blocks::Branch;
use crate::dyadic::{DyadicInterval, DyadicRect, HaarIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct FaithfulCopy {
    /// Accepted family of every played `(host, small ordinal)`.
    families: BTreeMap<(usize, usize), Vec<HaarIndex>>,
}

struct Candidate {
    class: u8,
    family: Vec<HaarIndex>,
    covered: f64,
    dropped: f64,
}

impl FaithfulCopy {
    pub fn new() -> Self {
        Self::default()
    }
}

struct Admissible<'a> {
    ctx: &'a GameContext<'a>,
    host: usize,
    floor: usize,
    class: u8,
    used: &'a BTreeSet<usize>,
}

impl Admissible<'_> {
    fn ok(&self, ordinal: usize) -> bool {
        let big = &self.ctx.config.big;
        ordinal > self.floor
            && !self.used.contains(&ordinal)
            && big.global_index(self.host, ordinal).is_some_and(|g| self.ctx.pregame.classes[g] == self.class)
    }
}

/// Cover `region` by admissible intervals, splitting down to `depth`.
fn cover_1d(region: &[DyadicInterval], depth: u32, adm: &Admissible) -> (Vec<HaarIndex>, f64, f64) {
    let mut family = Vec::new();
    let (mut covered, mut dropped) = (0.0, 0.0);
    let mut stack: Vec<DyadicInterval> = region.iter().rev().copied().collect();
    while let Some(k) = stack.pop() {
        if k.level > depth {
            dropped += k.measure();
        } else if adm.ok(k.ordinal() as usize) {
            covered += k.measure();
            family.push(HaarIndex::One(k));
        } else {
            stack.push(k.right_half());
            stack.push(k.left_half());
        }
    }
    (family, covered, dropped)
}

/// Intervals at level `shift + I.level` that follow the path of `I` below
/// every level-`shift` interval.
fn dilated(i: &DyadicInterval, shift: u32) -> Vec<DyadicInterval> {
    (0..1u64 << shift)
        .map(|q| DyadicInterval { level: shift + i.level, position: (q << i.level) + i.position })
        .collect()
}

impl PlayerTwo for FaithfulCopy {
    fn play(&mut self, ctx: &GameContext, turn: Turn, mv: &PlayerIMove) -> Result<PlayerIIMove> {
        let cfg = ctx.config;
        let host = turn.host;
        let (k, j) = turn.small;
        let big_spec = cfg.big.components()[host];
        let small_spec = cfg.small.components()[k];
        let idx = small_spec.indices()[j - 1];
        let used: BTreeSet<usize> =
            ctx.blocks.iter().filter(|b| b.host == host).flat_map(|b| b.support.iter().copied()).collect();

        let strict_floor = mv.l_n.max(mv.m_n.map_or(0, |m| m.saturating_sub(1)));
        let mut levels = vec![(Relaxation::None, strict_floor)];
        if cfg.policy == Policy::BestEffort {
            if cfg.branch == Branch::Full && strict_floor > mv.l_n {
                levels.push((Relaxation::IgnoreTail, mv.l_n));
            }
            levels.push((Relaxation::IgnoreFloor, 0));
        }

        let region: Vec<DyadicInterval> = match idx {
            HaarIndex::One(i) => match i.parent() {
                None => vec![DyadicInterval::unit()],
                Some(p) => {
                    let fam = self.families.get(&(host, p.ordinal() as usize)).ok_or_else(|| {
                        Error::Precondition(format!("parent of small ordinal {j} has not been played"))
                    })?;
                    fam.iter()
                        .map(|h| match h {
                            HaarIndex::One(q) if i.position % 2 == 0 => q.left_half(),
                            HaarIndex::One(q) => q.right_half(),
                            HaarIndex::Two(_) => unreachable!("one-parameter family"),
                        })
                        .collect()
                }
            },
            HaarIndex::Two(_) => Vec::new(),
        };
        let shift = big_spec.depth - small_spec.depth;

        let mut best: Option<(Relaxation, Candidate)> = None;
        for (relax, floor) in levels {
            let mut level_best: Option<Candidate> = None;
            for class in [1u8, 2] {
                let adm = Admissible { ctx, host, floor, class, used: &used };
                let (family, covered, dropped) = match idx {
                    HaarIndex::One(_) => cover_1d(&region, big_spec.depth, &adm),
                    HaarIndex::Two(r) => {
                        let (mut fam, mut cov, mut drop) = (Vec::new(), 0.0, 0.0);
                        for x in dilated(&r.x, shift) {
                            for y in dilated(&r.y, shift) {
                                let rect = DyadicRect::new(x, y);
                                if adm.ok(rect.ordinal() as usize) {
                                    cov += rect.measure();
                                    fam.push(HaarIndex::Two(rect));
                                } else {
                                    drop += rect.measure();
                                }
                            }
                        }
                        (fam, cov, drop)
                    }
                };
                let cand = Candidate { class, family, covered, dropped };
                if level_best.as_ref().is_none_or(|b| cand.covered > b.covered) {
                    level_best = Some(cand);
                }
            }
            let cand = level_best.expect("two classes tried");
            if cand.dropped == 0.0 && cand.covered > 0.0 {
                best = Some((relax, cand));
                break;
            }
            if best.as_ref().is_none_or(|(_, b)| cand.covered > b.covered) {
                best = Some((relax, cand));
            }
        }
        let (relaxation, cand) = best.expect("at least one level");
        if cand.family.is_empty() {
            return Err(Error::Capacity(format!(
                "no admissible ambient index left for small ordinal {j} in component {host}"
            )));
        }

        // x_n = Σ h_J / ‖Σ h_J‖, x*_n(f) = ‖Σ h_J‖ <f, Σ h_J> / |U|
        let mut fam = cand.family;
        fam.sort_by_key(|h| h.ordinal());
        let norms = cfg.big.haar_norms(host);
        let mut raw = vec![0.0; big_spec.dimension()];
        for h in &fam {
            raw[h.ordinal() as usize - 1] = 1.0;
        }
        let total = big_spec.eval_norm(&raw);
        let union: f64 = fam.iter().map(|h| h.measure()).sum();
        let support: Vec<usize> = fam.iter().map(|h| h.ordinal() as usize).collect();
        let lambda = support.iter().map(|&o| norms[o - 1] / total).collect();
        let mu = fam.iter().zip(&support).map(|(h, &o)| h.measure() * total / (union * norms[o - 1])).collect();
        self.families.insert((host, j), fam);
        Ok(PlayerIIMove {
            class: cand.class,
            support,
            lambda,
            mu,
            relaxation,
            dropped_measure: cand.dropped,
            covered_measure: cand.covered,
        })
    }
}
