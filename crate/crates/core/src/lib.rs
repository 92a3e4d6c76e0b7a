//! Simulation of privacy-preserving coordination between sequential heat and
//! electricity markets.
//!
//! The crate clears a follower electricity market (per-hour LPs with zonal
//! prices), solves the leader heat market as a single-level MILP reformulation
//! of the underlying bilevel program, obfuscates consumer load streams with a
//! w-event Laplace mechanism, restores fidelity of the released stream through
//! a post-processing MIQP, and measures the resulting costs of privacy.
//!
//! Solvers are self-contained: a bounded-variable dense simplex with duals
//! ([`simplex`]), and branch-and-bound over binaries with LP or convex-QP
//! relaxations ([`branchbound`]). Independent brute-force references live in
//! [`oracles`] and back the test suites.

pub mod branchbound;
pub mod experiments;
mod linalg;
pub mod markets;
pub mod oracles;
pub mod privacy;
pub mod simplex;
pub mod sysmodel;

pub use markets::{FollowerOutcome, LeaderOutcome};
pub use privacy::{PpsmTrace, PrivacyParams};
pub use sysmodel::{EnergySystem, LoadData, TransmissionLine, Unit};

/// One megawatt-hour in the internal watt-hour representation.
pub const WH_PER_MWH: f64 = 1e6;
