//! Desk-scale verification laboratory for Gibbs measures on random factor
//! graphs.
//!
//! The crate computes exact Gibbs tables on small instances by enumeration,
//! decomposes them into subcube states by pinning, measures cut-metric
//! distances with an exact linear program, enumerates cavities, and scores
//! Bethe-state and Belief-Propagation fixed-point conditions.
//!
//! Modules:
//! - [`graph`]: factor graphs, subgraphs, neighborhoods, pinning.
//! - [`measure`]: dense measures on Ω^n, events, marginals, conditionals.
//! - [`gibbs`]: exact partition function, Gibbs tables, standard messages.
//! - [`models`]: seeded samplers for G(n,m,P) and the Potts/k-SAT families.
//! - [`lp`]: deterministic dense simplex used by the transport programs.
//! - [`cutmetric`]: cut distance (exact / upper / lower), couplings,
//!   Wasserstein ℓ1.
//! - [`pinning`]: ε-symmetry scores, the pinning decomposition, mixture
//!   checks.
//! - [`cavities`]: cavity enumeration, Bethe local measures and deviations.
//! - [`bp`]: message sets, the BP operator, fixed-point iteration,
//!   canonical residuals.
//! - [`observables`]: intensive observables, overlaps, continuity probes.

pub mod bp;
pub mod cavities;
pub mod cutmetric;
pub mod error;
pub mod gibbs;
pub mod graph;
pub mod lp;
pub mod measure;
pub mod models;
pub mod observables;
pub mod pinning;

pub use error::{Error, Result};
pub use graph::{FactorGraph, HardPin, SpinDomain, WeightTable};
pub use measure::{DenseMeasure, Event, EventSet, SubcubeEvent};
