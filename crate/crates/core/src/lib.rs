//! Monte Carlo laboratory for the weighted metric measure space
//! `(R^{3n}, |.|, e^{-2 Phi} dx)` built from a Coulomb ground state.
//!
//! The crate simulates the drift diffusion `dX = -grad Phi dt + dW`, estimates
//! Kato norms, Girsanov weights and Feynman–Kac functionals along it, and
//! implements the Bismut–Elworthy–Li gradient formula with the damped
//! derivative flow `dQ = -1/2 Q Ric dt`.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod geometry;
pub mod paths;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod stochcalc;
pub mod weights;

pub use error::{Error, Result};
pub use exec::Executor;
pub use paths::{Path, Sampling};
pub use rng::SeedTag;
pub use stats::Estimate;
pub use weights::{MolecularSpec, Nucleus, WeightField};
