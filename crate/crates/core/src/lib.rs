//! Commute-time distance functions on finite Markov chains.
//!
//! The crate is organised bottom-up:
//!
//! - [`chain`]: stationary distribution, fundamental matrix, mean first-passage
//!   and commute times, and the policy-induced Laplacian with its pseudo-inverse.
//! - [`embed_exact`]: classical MDS, spectral and scaled-spectral embeddings.
//! - [`embed_online`]: trajectory sampling, first-passage pair extraction and
//!   stochastic stress minimisation of a per-state embedding table.
//! - [`gridworld`]: the 5x5 mazes and U-maze used by the experiments.
//! - [`curriculum`]: tabular goal-conditioned learning driven by a distance model.

pub mod chain;
pub mod curriculum;
pub mod embed_exact;
pub mod embed_online;
pub mod gridworld;
pub mod linalg;
pub mod stats;

pub use chain::{ChainError, ChainLaplacian, MarkovChain, PassageTables};
pub use embed_exact::EmbeddingTable;
