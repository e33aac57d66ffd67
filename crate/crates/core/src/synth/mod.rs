//! Synthetic image generation from label maps: random deformation, a
//! label-conditioned Gaussian mixture for intensities, then bias field,
//! gamma contrast, noise and slice-thickness corruption.

mod config;
mod grid;
mod intensity;
mod pipeline;
mod resolution;
mod spatial;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clustering::ClusterError;
use crate::volume::{LabelMap, VolumeError};

pub use config::{GenerationConfig, Range};
pub use grid::{control_spacing, upsample};
pub use intensity::{
    add_noise, apply_bias, apply_bias_field, apply_gamma, apply_gamma_contrast, apply_noise, bias_multiplier,
    draw_bias, draw_gamma, draw_label_intensities, draw_noise_std, synthesize_intensities, BiasParams,
    LabelIntensity,
};
pub use pipeline::{
    generate_training_pair, generate_training_pair_with, ClusterCount, ClusterSource, DrawnParams, FineIntensity,
    TrainingPair,
};
pub use resolution::{apply_resolution, blur_sigma, draw_resolution, simulate_resolution, ResolutionParams};
pub use spatial::{sample_spatial_transform, warp_labels, warp_labels_with_fill, AffineParams, DisplacementField, SpatialTransform};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no intensity parameters for fine label {0}")]
    MissingLabel(u32),
    #[error("drawn parameter out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Random stream for pair `index` of a run seeded with `seed`. Streams of
/// different pairs are independent, so pairs can be generated in any order.
pub fn pair_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw in `[lo, hi]`; always consumes one value so the stream
/// layout does not depend on the configured ranges.
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: Range) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// With probability `probability` every voxel of `arm_labels` becomes
/// background. Returns the map and whether removal happened. The draw is
/// made even when `arm_labels` is empty.
pub fn remove_arms<R: Rng + ?Sized>(
    labels: &LabelMap,
    arm_labels: &[u32],
    probability: f64,
    rng: &mut R,
) -> (LabelMap, bool) {
    let u: f64 = rng.random();
    let removed = u < probability;
    if !removed || arm_labels.is_empty() {
        return (labels.clone(), removed);
    }
    let out = labels
        .labels()
        .iter()
        .map(|l| if arm_labels.contains(l) { 0 } else { *l })
        .collect();
    (LabelMap::new(labels.geometry().clone(), out).expect("same geometry"), removed)
}
