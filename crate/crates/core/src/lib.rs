//! Simulation of dynamical wavefunction-collapse models.
//!
//! The crate covers four families of dynamics and one family of observables:
//!
//! * [`ruin`]: the Gambler's Ruin coin game, its absorption probabilities and
//!   the Fokker–Planck equation `∂ρ/∂t = λ ∂²/∂x² [x(1-x)]^r ρ`.
//! * [`grw`]: spontaneous localization by discrete Gaussian hits with the
//!   `λ N² dx dt` probability rule.
//! * [`csl`]: continuous spontaneous localization driven by a classical field
//!   `w(x, t)`, sampled either from the raw reference measure (with squared-norm
//!   weights) or directly from the physical ("cooked") law.
//! * [`reality`]: projectors on particle number in a region, the amount of
//!   `n`-stuff, objectivity thresholds and the stuff flow balance.
//!
//! Shared numerical pieces (grids, wavefunctions, noise fields, seeded random
//! streams) live in [`grid`], [`wavefunction`], [`two_state`], [`noise`] and
//! [`rng`].

pub mod csl;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod grw;
pub mod noise;
pub mod reality;
pub mod rng;
pub mod ruin;
pub mod stats;
pub mod two_state;
pub mod wavefunction;

mod time;

pub use error::{Error, Result};
pub use grid::Grid1D;
pub use noise::{sample_noise, NoiseChannel, NoiseField, NoiseSpec};
pub use rng::RngStream;
pub use time::uniform_steps;
pub use two_state::TwoStateVector;
pub use wavefunction::{Packet, Sector, WaveFunction};
