//! Supervised event detection on dynamic graph snapshot sequences.
//!
//! The model encodes each snapshot with a two-layer GCN, pools node
//! embeddings with self-attention, tracks the pooled sequence with an
//! LSTM, aggregates the dynamic states with temporal self-attention,
//! and classifies with a small MLP under an imbalance-weighted
//! cross-entropy loss. Everything is built on a from-scratch f64
//! reverse-mode tape so gradients can be checked against finite
//! differences.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod par;
pub mod params;
pub mod synth;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
