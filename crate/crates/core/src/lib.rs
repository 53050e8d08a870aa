//! Haar-basis norms, block estimates, the two-player reproduction game and
//! factorization certificates `I = B̃ T Ã` on finite ℓ∞-sums of Hardy-type
//! spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`dyadic`]: dyadic intervals, rectangles, Haar functions and index orders.
//! * [`funcspace`]: Haar expansions and exact norms (L^p, H^p, VMO, H^p(H^q), VMO(H^r), L^r(L^s)).
//! * [`sumspace`]: finite ℓ∞-sums `Z`, projections, functionals and restricted dual norms.
//! * [`operators`]: dense operators on `Z`, norm bounds, diagonal factorization, Γ-selection.
//! * [`estimates`]: block sequences, r-estimates, curvature and tail profiles.
//! * [`blocks`]: block systems, the operators `A`, `B`, `D`, hypothesis ledgers and certificates.
//! * [`game`]: the reproduction game, both players, sign selection and the factorization pipeline.
//! * [`cli`]: the command-line surface and report emission.

// NaN must fail range checks, so `!(x > 0.0)` is written on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod cli;
pub mod dyadic;
pub mod error;
pub mod estimates;
pub mod funcspace;
pub mod game;
pub mod operators;
pub mod rng;
pub mod sumspace;

pub use error::{Error, Result};
