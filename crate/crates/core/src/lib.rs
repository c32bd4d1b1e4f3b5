//! Strength-based analysis and preferential-attachment (PA) rewiring of
//! randomly initialized neural-network weights.
//!
//! A dense layer is treated as a complete weighted bipartite graph between
//! its `n_l` inputs and `n_{l+1}` outputs. The strength of a neuron is the
//! sum of its incident weights. Standard initializers produce strength
//! distributions whose spread grows with layer size; [`rewiring::pa_rewire`]
//! reorganizes the existing weights (never changing their values) so that
//! strengths on both sides collapse toward zero.
//!
//! Around that core the crate carries what is needed to study the effect:
//! literature initializers, strength statistics, a from-scratch MLP trainer
//! for MNIST-style IDX data, and the significance tests used to compare run
//! populations.

pub mod data;
pub mod error;
pub mod experiment;
pub mod initializers;
pub mod matrix_io;
pub mod mlp;
pub mod rewiring;
pub mod rng;
pub mod stats;
pub mod strength;
pub mod train;

pub use error::{Error, Result};
pub use initializers::{init, InitMethod, InitSpec};
pub use matrix_io::{conv_to_2d, load_matrix, save_matrix, transpose, ConvTensor, WeightMatrix};
pub use rewiring::{pa_pass, pa_rewire, pa_rewire_conv, variance_search, PassMode, SearchMode};
pub use rng::{derive_stream, RngStream, StreamPurpose};
pub use strength::{strength_stats, strengths, Side, StrengthStats};
