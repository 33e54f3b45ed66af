//! Guaranteed zonotopic under-approximations of reachable sets and tubes of
//! linear time-invariant systems `ẋ = Ax + u`.
//!
//! The engine only evaluates truncated Taylor series of the matrix
//! exponential; deflation of the generators makes every computed set a
//! subset of the exact reachable set.

pub mod cli;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod zonotope;

pub use engine::{backward_reach_under, reach_under, EngineConfig, ReachResult, SystemSpec};
pub use error::{ReachError, Result};
pub use linalg::{Matrix, Vector};
pub use zonotope::Zonotope;
