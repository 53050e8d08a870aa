//! The adversary: pregame sign classes, the tolerance schedule and, in the
//! tail branch, a nested chain of coordinate tails on which every past
//! `T* x*_j` is small.

use nalgebra::DVector;

use super::{GameConfig, GameContext, PlayerIMove, PlayerOne, Pregame, Turn};
use crate::blocks::Branch;
use crate::error::{Error, Result};
use crate::estimates::tail_profile;
use crate::operators::{diagonal_delta, operator_norm_bounds_with, NormSearch, OperatorZ};
use crate::sumspace::ZFunctional;

/// Strict upper bound `η / (2^(n+2) n (1 + ‖T‖) √(C + η))` for `η_n`.
pub fn eta_schedule_value(eta: f64, n: usize, t_norm: f64, c: f64) -> f64 {
    eta / ((n as f64 + 2.0).exp2() * n as f64 * (1.0 + t_norm) * (c + eta).sqrt())
}

#[derive(Debug, Clone, Default)]
pub struct Adversary {
    /// Current `W^(n)` tail starts.
    chain: Vec<usize>,
    /// `T* x*_j` of the finished turns.
    adjoints: Vec<ZFunctional>,
    eta_next: f64,
}

impl Adversary {
    pub fn new() -> Self {
        Self::default()
    }

    fn sync_adjoints(&mut self, ctx: &GameContext) -> Result<()> {
        let big = &ctx.config.big;
        let tt = ctx.t.matrix().transpose();
        for b in &ctx.blocks[self.adjoints.len()..] {
            let mut c = vec![0.0; big.dim()];
            for ((&i, m), &s) in b.support.iter().zip(&b.mu).zip(&b.signs) {
                c[big.global_index(b.host, i).expect("support inside the host")] = f64::from(s) * m;
            }
            let f = &tt * DVector::from_vec(c);
            self.adjoints.push(ZFunctional::from_coords(big, f.as_slice())?);
        }
        Ok(())
    }

    /// Advance the chain until `‖T* x*_j|_{W}‖ <= eta` for every past `j`.
    fn advance(&mut self, ctx: &GameContext, eta: f64) -> Result<()> {
        self.sync_adjoints(ctx)?;
        let big = &ctx.config.big;
        if self.chain.is_empty() {
            self.chain = vec![1; big.len()];
        }
        for f in &self.adjoints {
            let prof = tail_profile(big, f, eta)?;
            for (c, m) in self.chain.iter_mut().zip(prof.m) {
                *c = (*c).max(m);
            }
        }
        Ok(())
    }
}

impl PlayerOne for Adversary {
    fn pregame(&mut self, t: &OperatorZ, config: &GameConfig) -> Result<Pregame> {
        let diagonal_delta = diagonal_delta(t);
        let delta = config.delta.unwrap_or(diagonal_delta);
        if !(diagonal_delta > 0.0) || delta > diagonal_delta {
            return Err(Error::Precondition(format!(
                "diagonal bound δ = {delta} exceeds min |T_nn| = {diagonal_delta}"
            )));
        }
        let big = &config.big;
        let classes: Vec<u8> = t
            .diagonal()
            .iter()
            .map(|&d| {
                if d >= delta {
                    1
                } else if d <= -delta {
                    2
                } else {
                    0
                }
            })
            .collect();
        let class_sizes = (0..big.len())
            .map(|k| {
                let pos = big.component_positions(k);
                [pos.iter().filter(|&&g| classes[g] == 1).count(), pos.iter().filter(|&&g| classes[g] == 2).count()]
            })
            .collect();
        // only a proxy is needed here, so a short coarse ascent suffices
        let search = NormSearch {
            basis_starts: 1,
            max_sweeps: 1,
            fine_min_step: 1.0,
            ..NormSearch::new(config.norm_trials, config.seed)
        };
        let t_norm_lower = operator_norm_bounds_with(t, &search)?.certified_lower;
        let t_norm_proxy = t_norm_lower * config.norm_slack;
        let n_turns = config.small.dim();
        let schedule = (1..=n_turns)
            .map(|n| config.eta_fraction * eta_schedule_value(config.eta, n, t_norm_proxy, config.c_target))
            .collect();
        self.chain = vec![1; big.len()];
        self.adjoints.clear();
        self.eta_next =
            config.eta_fraction * eta_schedule_value(config.eta, n_turns + 1, t_norm_proxy, config.c_target);
        Ok(Pregame { delta, diagonal_delta, t_norm_lower, t_norm_proxy, class_sizes, schedule, classes })
    }

    fn play(&mut self, ctx: &GameContext, turn: Turn) -> Result<PlayerIMove> {
        let eta_n = ctx.pregame.schedule[turn.n - 1];
        let l_n = ctx.l_n(turn.host);
        let past = turn.n - 1;
        let (m_n, tails) = match ctx.config.branch {
            Branch::Full => {
                self.advance(ctx, eta_n)?;
                (Some(self.chain[turn.host]), Some(self.chain.clone()))
            }
            Branch::SubSum => (None, None),
        };
        let host_dim = ctx.config.big.component_dim(turn.host);
        let basis = 2 * l_n.min(host_dim);
        Ok(PlayerIMove { eta_n, l_n, m_n, tails, annihilate: 2 * past + basis, preannihilate: 2 * past + basis })
    }

    fn closing_tails(&mut self, ctx: &GameContext) -> Result<Option<Vec<usize>>> {
        match ctx.config.branch {
            Branch::Full => {
                let eta = self.eta_next;
                self.advance(ctx, eta)?;
                Ok(Some(self.chain.clone()))
            }
            Branch::SubSum => Ok(None),
        }
    }
}
