//! Per-query dynamic node dropout for feed-forward ReLU networks.
//!
//! Locality-sensitive hash tables map each layer input to an importance
//! ranking of that layer's nodes; only the top `k` percent are computed. The
//! compute fraction `k` is chosen per query either to meet an accuracy target
//! at the lowest cost (via confidence tables and a calibration curve) or to
//! meet a latency budget at the highest accuracy (via latency profiles).

mod codec;
pub mod bench;
pub mod confidence;
pub mod engine;
pub mod error;
pub mod importance;
pub mod latency;
pub mod lsh;
pub mod model;
pub mod sparse;

pub use error::{Error, Result};
