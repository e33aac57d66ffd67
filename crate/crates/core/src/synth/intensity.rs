//! Label-conditioned intensity synthesis and intensity corruptions. Each
//! stage has a `draw_*` step producing its parameters and an `apply_*` step
//! that uses them, so a run can be recorded and replayed.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume::{LabelMap, ScalarVolume};

use super::config::GenerationConfig;
use super::grid::upsample;
use super::{uniform, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelIntensity {
    pub mean: f64,
    pub std: f64,
}

/// One (μ, σ) per fine label, drawn in ascending id order.
pub fn draw_label_intensities<R: Rng + ?Sized>(
    fine_ids: impl IntoIterator<Item = u32>,
    config: &GenerationConfig,
    rng: &mut R,
) -> BTreeMap<u32, LabelIntensity> {
    let mut ids: Vec<u32> = fine_ids.into_iter().collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let mean = uniform(rng, config.gmm_mean_range);
            let std = uniform(rng, config.gmm_std_range);
            (id, LabelIntensity { mean, std })
        })
        .collect()
}

/// Draws every voxel from its label's normal distribution, in voxel order.
pub fn synthesize_intensities<R: Rng + ?Sized>(
    fine: &LabelMap,
    params: &BTreeMap<u32, LabelIntensity>,
    rng: &mut R,
) -> Result<ScalarVolume, SynthError> {
    let max = fine.labels().iter().copied().max().unwrap_or(0) as usize;
    let mut lookup: Vec<Option<LabelIntensity>> = vec![None; max + 1];
    for (&id, &p) in params.range(..=max as u32) {
        lookup[id as usize] = Some(p);
    }
    let mut values = Vec::with_capacity(fine.labels().len());
    for &l in fine.labels() {
        let p = lookup[l as usize].ok_or(SynthError::MissingLabel(l))?;
        let z: f64 = StandardNormal.sample(rng);
        values.push(p.mean + p.std * z);
    }
    Ok(ScalarVolume::new(fine.geometry().clone(), values)?)
}

/// Log-domain control values of the bias field.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasParams {
    pub std: f64,
    pub grid: [usize; 3],
    pub control: Vec<f64>,
}

pub fn draw_bias<R: Rng + ?Sized>(config: &GenerationConfig, rng: &mut R) -> BiasParams {
    let std = uniform(rng, [0.0, config.bias_std_max]);
    let n = config.bias_grid.iter().product();
    let control = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    BiasParams {
        std,
        grid: config.bias_grid,
        control,
    }
}

/// The strictly positive multiplicative field, `exp` of the upsampled grid.
pub fn bias_multiplier(params: &BiasParams, shape: [usize; 3]) -> Vec<f64> {
    let mut field = upsample(&params.control, params.grid, shape);
    field.par_iter_mut().for_each(|v| *v = v.exp());
    field
}

pub fn apply_bias(image: &ScalarVolume, params: &BiasParams) -> Result<ScalarVolume, SynthError> {
    if params.control.iter().all(|&v| v == 0.0) {
        return Ok(image.clone());
    }
    let mut field = bias_multiplier(params, image.geometry().shape());
    field.par_iter_mut().zip(image.values().par_iter()).for_each(|(m, &v)| *m *= v);
    Ok(ScalarVolume::new(image.geometry().clone(), field)?)
}

pub fn apply_bias_field<R: Rng + ?Sized>(
    image: &ScalarVolume,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<(ScalarVolume, BiasParams), SynthError> {
    let params = draw_bias(config, rng);
    Ok((apply_bias(image, &params)?, params))
}

/// Log of the gamma exponent.
pub fn draw_gamma<R: Rng + ?Sized>(config: &GenerationConfig, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    config.gamma_log_std * z
}

/// Min-max normalisation to [0, 1] followed by `v^exp(log_gamma)`. A constant
/// image becomes all zeros and the flag is set.
pub fn apply_gamma(image: &ScalarVolume, log_gamma: f64) -> (ScalarVolume, bool) {
    let (lo, hi) = image.min_max();
    if !(hi > lo) {
        log::warn!("gamma contrast on a constant image; returning zeros");
        return (ScalarVolume::filled(image.geometry().clone(), 0.0).expect("finite"), true);
    }
    let gamma = log_gamma.exp();
    let span = hi - lo;
    let values = image
        .values()
        .par_iter()
        .map(|&v| {
            let u = ((v - lo) / span).clamp(0.0, 1.0);
            if gamma == 1.0 {
                u
            } else {
                u.powf(gamma)
            }
        })
        .collect();
    (ScalarVolume::from_parts_unchecked(image.geometry().clone(), values), false)
}

pub fn apply_gamma_contrast<R: Rng + ?Sized>(
    image: &ScalarVolume,
    config: &GenerationConfig,
    rng: &mut R,
) -> (ScalarVolume, f64, bool) {
    let g = draw_gamma(config, rng);
    let (out, degenerate) = apply_gamma(image, g);
    (out, g, degenerate)
}

pub fn draw_noise_std<R: Rng + ?Sized>(config: &GenerationConfig, rng: &mut R) -> f64 {
    uniform(rng, [0.0, config.noise_std_max])
}

/// Adds N(0, std²) per voxel (in voxel order) and clamps to [0, 1].
pub fn add_noise<R: Rng + ?Sized>(image: &ScalarVolume, std: f64, rng: &mut R) -> ScalarVolume {
    if std == 0.0 {
        return image.clone();
    }
    let values = image
        .values()
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            (v + std * z).clamp(0.0, 1.0)
        })
        .collect();
    ScalarVolume::from_parts_unchecked(image.geometry().clone(), values)
}

pub fn apply_noise<R: Rng + ?Sized>(
    image: &ScalarVolume,
    config: &GenerationConfig,
    rng: &mut R,
) -> (ScalarVolume, f64) {
    let std = draw_noise_std(config, rng);
    (add_noise(image, std, rng), std)
}
