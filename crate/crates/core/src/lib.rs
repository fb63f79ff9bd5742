//! Optimal market-making toolkit.
//!
//! A market maker quotes a bid price `S - δ^b` and an ask price `S + δ^a`
//! around an exogenous reference price `S`, and trades arrive as point
//! processes whose intensities `Λ(δ)` decay with the quoted offsets. The
//! quoting problem reduces to a backward tridiagonal system of nonlinear
//! ODEs for a value-surface component `θ(t, q)`; the optimal offsets are
//! read off inventory finite differences of `θ` through the Hamiltonian
//! maximizer `δ̃*_ξ`. A single parameter `ξ` spans the two classical
//! objectives: `ξ = γ` for CARA utility of terminal wealth (model A) and
//! `ξ = 0` for expected wealth with a running inventory penalty (model B).
//!
//! The crate provides:
//!
//! * [`intensity`] — admissible arrival-intensity curves and hypothesis checks,
//! * [`hamiltonian`] — the transforms `H_ξ`, `H'_ξ`, `H''_ξ(0)` and `δ̃*_ξ`,
//! * [`single`] — the single-asset θ solver, its exact linear-system oracle
//!   for exponential intensities, and quote extraction,
//! * [`multi`] — the multi-asset θ solver on a tensor inventory grid,
//! * [`closed_form`] — asymptotic closed-form quote approximations, spread
//!   and skew formulas, comparative statics, and the Γ coupling matrix,
//! * [`simulate`] — a Monte Carlo engine for the market dynamics with
//!   common-random-number strategy comparison,
//! * [`calibrate`] — maximum-likelihood fitting of exponential intensities
//!   from quote/fill observations.

pub mod calibrate;
pub mod closed_form;
pub mod error;
pub mod hamiltonian;
pub mod intensity;
pub mod multi;
pub mod rng;
pub mod simulate;
pub mod single;

pub use error::CoreError;
pub use hamiltonian::HamiltonianContext;
pub use intensity::IntensityModel;
pub use single::{Penalty, SingleAssetProblem, ThetaSurface};
