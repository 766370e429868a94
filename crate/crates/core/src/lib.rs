//! Markovian graph-sequence models with latent community structure.
//!
//! The pipeline runs per-snapshot community recovery ([`recover`]), merges
//! the per-snapshot estimates ([`unify`]), fits link-persistence parameters
//! ([`estimate`]) and, when communities change over time, recovers the new
//! memberships of nodes that switched ([`changing`]). [`generator`] produces
//! seeded synthetic sequences for all of these.

pub mod assignment;
pub mod changing;
pub mod error;
pub mod estimate;
pub mod generator;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod recover;
pub mod rng;
pub mod unify;

pub use error::{Error, Result};
pub use graph::{
    cluster_matrix, membership_from_cluster_matrix, validate_sequence, Adjacency, BlockMatrix,
    ClusterMatrix, Diagnostic, DynamicsParams, GraphSequence, MajorityMask, Membership, ModelTag,
    Transition,
};
