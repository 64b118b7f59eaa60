//! Westfall-Young permutation procedures for familywise error control under
//! dependence.
//!
//! The crate is organised around the min-p permutation distribution: marginal
//! p-values are computed for every hypothesis under every resampled response
//! ([`engine`]), the minimum over hypotheses is taken per resample, and the
//! single-step threshold or step-down adjusted p-values are read off that
//! distribution. Exact marginal tests live in [`marginal`], the oracle and
//! Bonferroni/Holm baselines in [`oracle`] and [`baselines`], and the
//! Gaussian simulation models used for power studies in [`sim`].
//!
//! Everything that iterates over permutations or replicates runs on rayon
//! when the `parallel` feature is enabled (the default) and falls back to
//! plain iterators otherwise. Results never depend on the degree of
//! parallelism.

pub mod baselines;
pub mod brute;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod marginal;
pub mod oracle;
pub mod par;
pub mod perm;
pub mod report;
pub mod rng;
pub mod sim;

pub use data::{DataMatrix, HypothesisPartition, Response};
pub use engine::{AdjustmentResult, Method, MinPDistribution, PermutedPValues};
pub use error::{Error, Result};
pub use lattice::PValueLattice;
pub use marginal::{MarginalTest, TestKind, TiePolicy};
pub use perm::{PermutationPlan, PlanMode, Resamples};
pub use sim::SimulationScenario;
