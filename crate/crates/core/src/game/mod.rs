//! The reproduction game and the factorization pipeline built on it.
//!
//! Every coordinate of the small truncation is reproduced, in the global
//! order, inside the matching component of the ambient truncation. At turn
//! `n` Player I names a tolerance `η_n` and the constraints the new block
//! should meet; Player II answers with a block `(E_n, λ, μ)`; the signs are
//! then fixed so that `|x*_n(T x_n)|` stays large. Both players are traits,
//! so other strategies can be plugged in.
//!
//! The constraints of Player I cannot all be met at desk scale (they shrink
//! geometrically with `n`), so every turn records how far they were met. The
//! residual of the final certificate is the ground truth.

mod pipeline;
mod player1;
mod player2;
pub mod signs;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::blocks::{interaction_matrix, Block, BlockSystem, Branch, Status};
use crate::error::{Error, Result};
use crate::operators::{random_large_diagonal, OperatorZ};
use crate::sumspace::{component_tail_dual, ZTrunc};

pub use pipeline::{factorize, Factorization};
pub use player1::{eta_schedule_value, Adversary};
pub use player2::FaithfulCopy;
pub use signs::{sign_selection, SignChoice};

/// Version of the transcript layout.
pub const TRANSCRIPT_VERSION: u32 = 1;

/// What Player II does when the constraints cannot all be honoured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Relax the ordinal constraints step by step and flag the turn.
    #[default]
    BestEffort,
    /// Never relax; abort when nothing admissible is left.
    Strict,
}

/// Which ordinal constraint Player II dropped at a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    None,
    /// The tail start `m_n` was ignored, `l_n` still honoured.
    IgnoreTail,
    /// Only the sign class and unused ordinals were required.
    IgnoreFloor,
}

/// Where the operator `T` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSource {
    Identity,
    RandomLargeDiagonal { delta: f64, off_diag: f64, seed: u64 },
    Explicit { operator: OperatorZ },
}

impl OperatorSource {
    pub fn build(&self, big: &ZTrunc) -> Result<OperatorZ> {
        match self {
            OperatorSource::Identity => Ok(OperatorZ::identity(big)),
            OperatorSource::RandomLargeDiagonal { delta, off_diag, seed } => {
                random_large_diagonal(big, *delta, *off_diag, *seed)
            }
            OperatorSource::Explicit { operator } => {
                if operator.domain() != big || operator.codomain() != big {
                    return Err(Error::Config("explicit operator does not act on the ambient truncation".into()));
                }
                Ok(operator.clone())
            }
        }
    }
}

fn default_slack() -> f64 {
    2.0
}
fn default_fraction() -> f64 {
    0.5
}
fn default_c() -> f64 {
    1.0
}
fn default_samples() -> usize {
    32
}
fn default_trials() -> usize {
    2
}
fn default_classes() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// Ambient truncation.
    pub big: ZTrunc,
    /// The system to reproduce; component `k` is hosted by ambient component `k`.
    pub small: ZTrunc,
    pub operator: OperatorSource,
    pub eta: f64,
    pub branch: Branch,
    pub seed: u64,
    /// Lower bound of the diagonal; defaults to the smallest `|T_nn|`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// `‖T‖` in the schedule is the witnessed lower bound times this factor.
    #[serde(default = "default_slack")]
    pub norm_slack: f64,
    /// `η_n` is this fraction of its strict upper bound.
    #[serde(default = "default_fraction")]
    pub eta_fraction: f64,
    /// Target equivalence constant `C`.
    #[serde(default = "default_c")]
    pub c_target: f64,
    #[serde(default)]
    pub policy: Policy,
    /// Random coefficient vectors per equivalence estimate.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Random starts per operator-norm search.
    #[serde(default = "default_trials")]
    pub norm_trials: usize,
    /// Size cap for `Γ`; defaults to one less than the number of components.
    #[serde(default)]
    pub gamma_budget: Option<usize>,
    /// `Ω_l = {k : k mod L = l}` for `l < L`.
    #[serde(default = "default_classes")]
    pub omega_classes: usize,
}

impl GameConfig {
    /// Defaults for everything but the required fields.
    pub fn new(big: ZTrunc, small: ZTrunc, operator: OperatorSource, eta: f64, branch: Branch, seed: u64) -> Self {
        Self {
            big,
            small,
            operator,
            eta,
            branch,
            seed,
            delta: None,
            norm_slack: default_slack(),
            eta_fraction: default_fraction(),
            c_target: default_c(),
            policy: Policy::default(),
            samples: default_samples(),
            norm_trials: default_trials(),
            gamma_budget: None,
            omega_classes: default_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.big.len() != self.small.len() {
            return bad(format!("{} ambient components for {} small ones", self.big.len(), self.small.len()));
        }
        for (k, (b, s)) in self.big.components().iter().zip(self.small.components()).enumerate() {
            if b.kind != s.kind {
                return bad(format!("component {k}: host {} differs from {}", b.kind.label(), s.kind.label()));
            }
            if s.depth >= b.depth {
                return bad(format!("component {k}: small depth {} must be below ambient depth {}", s.depth, b.depth));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.norm_slack >= 1.0 && self.norm_slack.is_finite()) {
            return bad(format!("norm_slack must be at least 1, got {}", self.norm_slack));
        }
        if !(self.eta_fraction > 0.0 && self.eta_fraction <= 1.0) {
            return bad(format!("eta_fraction must lie in (0, 1], got {}", self.eta_fraction));
        }
        if !(self.c_target >= 1.0 && self.c_target.is_finite()) {
            return bad(format!("c_target must be at least 1, got {}", self.c_target));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("delta must be positive, got {d}"));
            }
        }
        if self.omega_classes == 0 {
            return bad("omega_classes must be positive".into());
        }
        if let Some(b) = self.gamma_budget {
            if b == 0 || b > self.small.len() {
                return bad(format!("gamma_budget must lie in 1..={}", self.small.len()));
            }
        }
        if self.norm_trials == 0 {
            return bad("norm_trials must be positive".into());
        }
        Ok(())
    }

    /// The classes `Ω_l` used by the `Γ` branch; at most one per component.
    pub fn omegas(&self) -> Vec<BTreeSet<usize>> {
        let classes = self.omega_classes.min(self.small.len());
        (0..classes).map(|l| (l..self.small.len()).step_by(classes).collect()).collect()
    }
}

/// Quantities fixed before the first turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pregame {
    pub delta: f64,
    /// `min |T_nn|`.
    pub diagonal_delta: f64,
    pub t_norm_lower: f64,
    /// `t_norm_lower · norm_slack`, used wherever `‖T‖` enters.
    pub t_norm_proxy: f64,
    /// `|N_1 ∩ X_k|`, `|N_2 ∩ X_k|` per ambient component.
    pub class_sizes: Vec<[usize; 2]>,
    /// `η_n`, `n = 1..=N`.
    pub schedule: Vec<f64>,
    /// Per ambient global coordinate: 1 if `T_nn >= δ`, 2 if `T_nn <= -δ`, else 0.
    #[serde(skip)]
    pub classes: Vec<u8>,
}

/// Coordinates of the current turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Turn {
    /// 1-based.
    pub n: usize,
    /// `(k, j)` of the reproduced small coordinate.
    pub small: (usize, usize),
    pub host: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerIMove {
    pub eta_n: f64,
    /// Largest ordinal used so far in the host (1 before any use).
    pub l_n: usize,
    /// Tail start of `W_n` in the host (tail branch only).
    pub m_n: Option<usize>,
    /// Tail starts of `W^(n)` in every ambient component (tail branch only).
    pub tails: Option<Vec<usize>>,
    /// `|A_n|`: vectors `x*_n` should annihilate.
    pub annihilate: usize,
    /// `|B_n|`: functionals that should annihilate `x_n`.
    pub preannihilate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerIIMove {
    /// Sign class `i_n ∈ {1, 2}` of the diagonal over `E_n`.
    pub class: u8,
    pub support: Vec<usize>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub relaxation: Relaxation,
    /// Measure of the copied region (or of the rectangles kept) that had to be dropped.
    pub dropped_measure: f64,
    pub covered_measure: f64,
}

/// A lower bound for a distance, with its verdict against `η_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceCheck {
    pub lower: f64,
    /// Known upper bound, when one is available.
    pub upper: Option<f64>,
    /// `holds` means the distance is certified below `η_n` (often exactly 0).
    pub status: Status,
}

impl DistanceCheck {
    fn from_witnesses(lower: f64, upper: Option<f64>, eta_n: f64) -> Self {
        let status = match upper {
            Some(u) if u < eta_n => Status::Holds,
            _ if lower >= eta_n => Status::Violated,
            _ => Status::Unresolved,
        };
        Self { lower, upper, status }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub small: (usize, usize),
    pub host: usize,
    pub player_one: PlayerIMove,
    pub player_two: PlayerIIMove,
    pub signs: Vec<i8>,
    /// `x*_n(T x_n)`.
    pub value: f64,
    /// `x*_n(x_n) = Σ λ μ`.
    pub pairing: f64,
    /// Every ordinal of `E_n` exceeds `l_n`.
    pub floor_ok: bool,
    /// Every ordinal of `E_n` is at least `m_n` (tail branch only).
    pub tail_ok: Option<bool>,
    /// `dist(x*_n, G_n)`.
    pub g_dist: DistanceCheck,
    /// `dist(x_n, W_n)`.
    pub w_dist: DistanceCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Postgame {
    pub relaxed_turns: usize,
    pub incomplete_turns: usize,
    /// `max_m Σ_{n<m} |x*_m(T x_n)|`.
    pub max_past_interaction: f64,
    /// `max_m Σ_{n>m} |x*_m(T x_n)|`.
    pub max_future_interaction: f64,
    pub g_holds: usize,
    pub w_holds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub turn: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub version: u32,
    pub config: GameConfig,
    pub pregame: Option<Pregame>,
    pub turns: Vec<TurnRecord>,
    /// Tail starts of `W^(N+1)` (tail branch only).
    pub closing_tails: Option<Vec<usize>>,
    pub postgame: Option<Postgame>,
    pub aborted: Option<Abort>,
}

impl Transcript {
    fn empty(config: &GameConfig) -> Self {
        Self {
            version: TRANSCRIPT_VERSION,
            config: config.clone(),
            pregame: None,
            turns: Vec::new(),
            closing_tails: None,
            postgame: None,
            aborted: None,
        }
    }

    /// `W^(n)` for `n = 1..=N + 1`, when the tail branch recorded them.
    pub fn tail_chain(&self) -> Option<Vec<Vec<usize>>> {
        let mut chain: Vec<Vec<usize>> = self.turns.iter().map(|t| t.player_one.tails.clone()).collect::<Option<_>>()?;
        chain.push(self.closing_tails.clone()?);
        Some(chain)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// State visible to both players.
pub struct GameContext<'a> {
    pub t: &'a OperatorZ,
    pub config: &'a GameConfig,
    pub pregame: &'a Pregame,
    /// Blocks of the finished turns, in turn order.
    pub blocks: &'a [Block],
}

impl GameContext<'_> {
    /// Largest ordinal used so far in `host`, or 1 if none.
    pub fn l_n(&self, host: usize) -> usize {
        self.blocks.iter().filter(|b| b.host == host).filter_map(|b| b.support.last().copied()).max().unwrap_or(1)
    }
}

pub trait PlayerOne {
    fn pregame(&mut self, t: &OperatorZ, config: &GameConfig) -> Result<Pregame>;
    fn play(&mut self, ctx: &GameContext, turn: Turn) -> Result<PlayerIMove>;
    /// Tail starts of `W^(N+1)`, for strategies that maintain a tail chain.
    fn closing_tails(&mut self, ctx: &GameContext) -> Result<Option<Vec<usize>>>;
}

pub trait PlayerTwo {
    fn play(&mut self, ctx: &GameContext, turn: Turn, mv: &PlayerIMove) -> Result<PlayerIIMove>;
}

/// A game stopped early, with the transcript up to that point.
#[derive(Debug)]
pub struct Aborted {
    pub transcript: Transcript,
    pub error: Error,
}

fn abort(mut transcript: Transcript, turn: usize, error: Error) -> Box<Aborted> {
    transcript.aborted = Some(Abort { turn, reason: error.to_string() });
    Box::new(Aborted { transcript, error })
}

/// Normalized ambient coordinates of `Σ ε_i w_i e_(host, i)`.
fn block_coords(big: &ZTrunc, b: &Block, w: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; big.dim()];
    for ((&i, wi), &s) in b.support.iter().zip(w).zip(&b.signs) {
        x[big.global_index(b.host, i).expect("support inside the host")] = f64::from(s) * wi;
    }
    x
}

/// Lower bounds for `dist(x*_n, A_n^⊥ ∩ X*_κ)` and `dist(x_n, (B_n)_⊥ ∩ X_κ)`.
///
/// For any `a`, `|x*(a)| / ‖P_κ a‖` bounds the first distance from below, and
/// for any functional `f`, `|f(x)| / ‖f|_{X_κ}‖` bounds the second. When all
/// pairings vanish the block lies in the subspace and the distance is 0.
fn annihilator_checks(ctx: &GameContext, b: &Block, l_n: usize, eta_n: f64) -> (DistanceCheck, DistanceCheck) {
    let big = &ctx.config.big;
    let t = ctx.t.matrix();
    let host = b.host;
    let hp = big.component_positions(host);
    let x = block_coords(big, b, &b.lambda);
    let xs = block_coords(big, b, &b.mu);
    let on_host = |v: &[f64], w: &[f64]| hp.iter().map(|&g| v[g] * w[g]).sum::<f64>();

    // vectors of A_n and functionals of B_n, as full coordinate vectors
    let mut vecs: Vec<Vec<f64>> = Vec::new();
    let mut funcs: Vec<Vec<f64>> = Vec::new();
    for p in ctx.blocks {
        let xm = block_coords(big, p, &p.lambda);
        let xsm = block_coords(big, p, &p.mu);
        vecs.push((t * nalgebra::DVector::from_vec(xm.clone())).as_slice().to_vec());
        funcs.push((t.transpose() * nalgebra::DVector::from_vec(xsm.clone())).as_slice().to_vec());
        if p.host == host {
            vecs.push(xm);
            funcs.push(xsm);
        }
    }
    for i in 1..=l_n.min(big.component_dim(host)) {
        let g = hp[i - 1];
        let mut e = vec![0.0; big.dim()];
        e[g] = 1.0;
        vecs.push(t.column(g).iter().copied().collect());
        funcs.push(t.row(g).iter().copied().collect());
        vecs.push(e.clone());
        funcs.push(e);
    }

    let g_lower = vecs
        .iter()
        .filter_map(|a| {
            let s = on_host(&xs, a);
            (s != 0.0).then(|| s.abs() / big.component_norm(host, a))
        })
        .fold(0.0, f64::max);
    let g_exact = vecs.iter().all(|a| on_host(&xs, a) == 0.0);
    let g = if g_exact {
        DistanceCheck { lower: 0.0, upper: Some(0.0), status: Status::Holds }
    } else {
        DistanceCheck::from_witnesses(g_lower, None, eta_n)
    };

    let w_lower = funcs
        .iter()
        .filter_map(|f| {
            let s = on_host(f, &x);
            (s != 0.0).then(|| {
                let c: Vec<f64> = hp.iter().map(|&gi| f[gi]).collect();
                s.abs() / component_tail_dual(big, host, &c, 1).upper
            })
        })
        .fold(0.0, f64::max);
    let w_exact = funcs.iter().all(|f| on_host(f, &x) == 0.0);
    let w = if w_exact {
        DistanceCheck { lower: 0.0, upper: Some(0.0), status: Status::Holds }
    } else {
        DistanceCheck::from_witnesses(w_lower, None, eta_n)
    };
    (g, w)
}

/// Distance of `x_n` to the tail `[e_(κ,j) : j >= m]`: the norm of the head,
/// exact for 1-unconditional components and an upper bound otherwise.
fn tail_distance(big: &ZTrunc, b: &Block, m: usize, eta_n: f64) -> DistanceCheck {
    let mut head = vec![0.0; big.dim()];
    for ((&i, l), &s) in b.support.iter().zip(&b.lambda).zip(&b.signs) {
        if i < m {
            head[big.global_index(b.host, i).expect("support inside the host")] = f64::from(s) * l;
        }
    }
    let up = big.component_norm(b.host, &head);
    let lo = if big.components()[b.host].kind.is_one_unconditional() { up } else { 0.0 };
    DistanceCheck::from_witnesses(lo, Some(up), eta_n)
}

/// Play every turn and return the transcript with the resulting block system.
pub fn run_game(
    t: &OperatorZ,
    config: &GameConfig,
    p1: &mut dyn PlayerOne,
    p2: &mut dyn PlayerTwo,
) -> std::result::Result<(Transcript, BlockSystem), Box<Aborted>> {
    let mut transcript = Transcript::empty(config);
    if let Err(e) = config.validate() {
        return Err(abort(transcript, 0, e));
    }
    if t.domain() != &config.big || t.codomain() != &config.big {
        return Err(abort(transcript, 0, Error::DimensionMismatch("operator does not act on the ambient truncation".into())));
    }
    let pregame = match p1.pregame(t, config) {
        Ok(p) => p,
        Err(e) => return Err(abort(transcript, 0, e)),
    };
    transcript.pregame = Some(pregame.clone());
    let big = &config.big;
    let mut blocks: Vec<Block> = Vec::with_capacity(config.small.dim());

    for n in 0..config.small.dim() {
        let (k, j) = config.small.coord(n);
        let turn = Turn { n: n + 1, small: (k, j), host: k };
        let ctx = GameContext { t, config, pregame: &pregame, blocks: &blocks };
        let step = (|| -> Result<TurnRecord> {
            let m1 = p1.play(&ctx, turn)?;
            let m2 = p2.play(&ctx, turn, &m1)?;
            let choice =
                sign_selection(t, big, turn.host, &m2.support, &m2.lambda, &m2.mu, pregame.delta, config.eta)?;
            let block = Block {
                host: turn.host,
                support: m2.support.clone(),
                lambda: m2.lambda.clone(),
                mu: m2.mu.clone(),
                signs: choice.signs.clone(),
            };
            let (g_dist, w_annih) = annihilator_checks(&ctx, &block, m1.l_n, m1.eta_n);
            let w_dist = match m1.m_n {
                Some(m) => tail_distance(big, &block, m, m1.eta_n),
                None => w_annih,
            };
            Ok(TurnRecord {
                turn: turn.n,
                small: turn.small,
                host: turn.host,
                floor_ok: block.support[0] > m1.l_n,
                tail_ok: m1.m_n.map(|m| block.support[0] >= m),
                pairing: block.pairing(),
                player_one: m1,
                player_two: m2,
                signs: choice.signs,
                value: choice.value,
                g_dist,
                w_dist,
            })
        })();
        match step {
            Ok(rec) => {
                blocks.push(Block {
                    host: rec.host,
                    support: rec.player_two.support.clone(),
                    lambda: rec.player_two.lambda.clone(),
                    mu: rec.player_two.mu.clone(),
                    signs: rec.signs.clone(),
                });
                transcript.turns.push(rec);
            }
            Err(e) => {
                let reason = e.to_string();
                return Err(abort(transcript, n + 1, Error::GameAborted { turn: n + 1, reason }));
            }
        }
    }

    let ctx = GameContext { t, config, pregame: &pregame, blocks: &blocks };
    match p1.closing_tails(&ctx) {
        Ok(c) => transcript.closing_tails = c,
        Err(e) => return Err(abort(transcript, config.small.dim() + 1, e)),
    }
    let bs = match BlockSystem::new(config.small.clone(), big.clone(), blocks) {
        Ok(b) => b,
        Err(e) => return Err(abort(transcript, config.small.dim() + 1, e)),
    };
    let m = match interaction_matrix(t, &bs) {
        Ok(m) => m,
        Err(e) => return Err(abort(transcript, config.small.dim() + 1, e)),
    };
    let nn = bs.len();
    let past = (0..nn).map(|r| (0..r).map(|c| m.entry(r, c).abs()).sum::<f64>()).fold(0.0, f64::max);
    let future = (0..nn).map(|r| (r + 1..nn).map(|c| m.entry(r, c).abs()).sum::<f64>()).fold(0.0, f64::max);
    let turns = &transcript.turns;
    transcript.postgame = Some(Postgame {
        relaxed_turns: turns.iter().filter(|t| t.player_two.relaxation != Relaxation::None).count(),
        incomplete_turns: turns.iter().filter(|t| t.player_two.dropped_measure > 0.0).count(),
        max_past_interaction: past,
        max_future_interaction: future,
        g_holds: turns.iter().filter(|t| t.g_dist.status == Status::Holds).count(),
        w_holds: turns.iter().filter(|t| t.w_dist.status == Status::Holds).count(),
    });
    Ok((transcript, bs))
}

/// Play with the reference strategies.
pub fn run_default_game(t: &OperatorZ, config: &GameConfig) -> std::result::Result<(Transcript, BlockSystem), Box<Aborted>> {
    run_game(t, config, &mut Adversary::new(), &mut FaithfulCopy::new())
}

/// Replay a transcript from its stored configuration and compare the
/// serialized result byte for byte.
pub fn replay(transcript: &Transcript) -> Result<(Transcript, bool)> {
    if transcript.version != TRANSCRIPT_VERSION {
        return Err(Error::Config(format!("transcript version {} is not {TRANSCRIPT_VERSION}", transcript.version)));
    }
    let t = transcript.config.operator.build(&transcript.config.big)?;
    let again = match run_default_game(&t, &transcript.config) {
        Ok((tr, _)) => tr,
        Err(a) => a.transcript,
    };
    let same = again.to_json()? == transcript.to_json()?;
    Ok((again, same))
}
