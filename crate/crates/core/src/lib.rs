//! Label-conditioned synthetic MRI generation and abdominal segmentation
//! benchmarking.

pub mod volume;
pub mod clustering;
pub mod metrics;
pub mod stats;
pub mod synth;
pub mod bench;
