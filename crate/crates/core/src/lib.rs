//! Heterogeneous graph learning with latent-space diffusion.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense and CSR matrices, seeded sampling, Adam, and a
//!   central-difference gradient checker.
//! - [`hetgraph`]: the typed multi-relation graph, loaders, normalisation,
//!   noise injection and a synthetic generator.
//! - [`encoder`]: relation-wise normalised propagation with multi-order
//!   summation and cross-relation pooling.
//! - [`diffusion`]: the noise schedule, closed-form corruption, the
//!   time-conditioned denoiser, its training losses and reverse iteration.
//! - [`tasks`]: embedding fusion, BPR and cross-entropy heads, the joint
//!   objective, and ranking / classification metrics.
//! - [`harness`]: training loop, leave-one-out evaluation, ablation and
//!   noise-robustness runners, reports and embedding export.
//!
//! Every gradient in the crate is derived by hand; [`certify`] lists them
//! together with finite-difference probes.

pub mod certify;
pub mod diffusion;
pub mod encoder;
mod error;
pub mod harness;
pub mod hetgraph;
pub mod numerics;
pub mod tasks;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, Rng, SparseMatrix};

/// Embedding tables are plain dense matrices with one row per node.
pub type EmbeddingTable = DenseMatrix;
