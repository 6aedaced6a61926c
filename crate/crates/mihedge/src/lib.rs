//! Model-independent hedging engine.
//!
//! Constructs hedging strategies from solutions of coupled parabolic PDE
//! systems, runs them pathwise under distinct continuous-semimartingale
//! models, and verifies (or refutes, via residual sampling and drift
//! detection) that the resulting wealth processes are model-independent.
//! Static no-arbitrage tooling for call strips and the blended
//! local-volatility calibration round out the verification pipeline.

pub mod error;
pub mod exec;
pub mod families;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod market;

pub mod models;
pub mod numerics;
pub mod payoff;
pub mod pde;
pub mod hedging;
pub mod stopping;

pub use error::{Error, Result};
