//! Simulation and inference for a single-electron quantum dot whose charge is
//! monitored by a quantum point contact.
//!
//! The dot has three levels, empty `|0⟩`, spin-down `|↓⟩` and spin-up `|↑⟩`.
//! A spin-down electron tunnels in at rate `γ↓`, a resonant drive rotates
//! `|↓⟩ ↔ |↑⟩` at Rabi frequency `Ω`, and a spin-up electron tunnels out at
//! rate `γ↑`. The sensor counts electrons at rate `r₀` or `r₁` depending on
//! the charge.
//!
//! - [`model`]: Hamiltonian, Lindbladian, propagators, state types.
//! - [`trajectory`]: quantum-jump ground truth.
//! - [`sensor`]: Poisson count records and the bin measurement operators.
//! - [`smoother`]: forward filter, backward effect matrices, past-quantum-state occupation.
//! - [`estimation`]: dwell-time fit, Bayesian Ω grid, Baum-Welch rates, the hybrid loop.
//! - [`io`], [`cli`]: file formats and the `qdot` command.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod seeding;
pub mod sensor;
pub mod smoother;
pub mod trajectory;

pub use error::{Error, Result};
