//! Training-free open-vocabulary temporal action segmentation.
//!
//! Frame embeddings and action-label text embeddings from a vision–language
//! model are compared by cosine similarity ([`faes`]), decoded into temporally
//! consistent labels with balanced entropic optimal transport ([`smts`]), and
//! scored with the usual segmentation metrics ([`metrics`]).

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod faes;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod smts;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
