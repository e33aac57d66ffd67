//! Thick-slice simulation along one axis: blur with the slice profile,
//! sample at the coarse spacing, and interpolate back to the original grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::volume::ScalarVolume;

use super::config::GenerationConfig;
use super::uniform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionParams {
    pub axis: usize,
    /// Simulated slice spacing in mm.
    pub spacing_mm: f64,
}

pub fn draw_resolution<R: Rng + ?Sized>(config: &GenerationConfig, rng: &mut R) -> ResolutionParams {
    let axis = rng.random_range(0..3);
    let spacing_mm = uniform(rng, [config.target_spacing, config.slice_spacing_max]);
    ResolutionParams { axis, spacing_mm }
}

/// Blur sigma in voxels for a spacing ratio; zero when nothing is lost.
pub fn blur_sigma(ratio: f64) -> f64 {
    if ratio <= 1.0 {
        0.0
    } else {
        2.0 * ratio / std::f64::consts::PI * (2.0 * std::f64::consts::LN_2).sqrt()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn lerp_clamped(line: &[f64], pos: f64) -> f64 {
    let last = (line.len() - 1) as f64;
    let pos = pos.clamp(0.0, last);
    let lo = pos as usize;
    let t = pos - lo as f64;
    if t == 0.0 {
        line[lo]
    } else {
        line[lo] + t * (line[lo + 1] - line[lo])
    }
}

/// Processes one line in place. When the coarse samples are sparse the
/// blurred line is only evaluated where they read it.
fn degrade_line(line: &mut [f64], kernel: &[f64], ratio: f64, blur: &mut Vec<f64>, low: &mut Vec<f64>) {
    let n = line.len();
    let r = (kernel.len() / 2) as isize;
    let blurred_at = |line: &[f64], i: usize| -> f64 {
        let start = i as isize - r;
        if start >= 0 && start as usize + kernel.len() <= n {
            let window = &line[start as usize..start as usize + kernel.len()];
            return kernel.iter().zip(window).map(|(w, v)| w * v).sum();
        }
        kernel
            .iter()
            .enumerate()
            .map(|(k, w)| w * line[(start + k as isize).clamp(0, n as isize - 1) as usize])
            .sum()
    };
    let dense = ratio < 2.0;
    if dense {
        blur.clear();
        blur.extend((0..n).map(|i| blurred_at(line, i)));
    }
    let at = |i: usize| if dense { blur[i] } else { blurred_at(line, i) };
    let n_low = ((n as f64 / ratio).ceil() as usize).max(1);
    let mid = (n as f64 - 1.0) / 2.0;
    let mid_low = (n_low as f64 - 1.0) / 2.0;
    let last = (n - 1) as f64;
    low.clear();
    low.extend((0..n_low).map(|j| {
        let pos = (mid + (j as f64 - mid_low) * ratio).clamp(0.0, last);
        let lo = pos as usize;
        let t = pos - lo as f64;
        let a = at(lo);
        if t == 0.0 {
            a
        } else {
            a + t * (at(lo + 1) - a)
        }
    }));
    for (i, v) in line.iter_mut().enumerate() {
        *v = lerp_clamped(low, (i as f64 - mid) / ratio + mid_low);
    }
}

/// Degrades resolution along `params.axis`; the grid is unchanged.
pub fn apply_resolution(image: &ScalarVolume, params: &ResolutionParams, target_spacing: f64) -> ScalarVolume {
    let ratio = params.spacing_mm / target_spacing;
    if ratio <= 1.0 {
        return image.clone();
    }
    let sigma = blur_sigma(ratio);
    let kernel = gaussian_kernel(sigma);
    let shape = image.geometry().shape();
    let axis = params.axis;
    let mut values = image.values().to_vec();
    let n = shape[axis];
    let (mut blur, mut low) = (Vec::new(), Vec::new());
    if axis == 0 {
        for line in values.chunks_mut(n) {
            degrade_line(line, &kernel, ratio, &mut blur, &mut low);
        }
    } else {
        // Gather the x-rows of one (y or z) slab so reads stay contiguous,
        // then degrade each x column of the gathered block.
        let nx = shape[0];
        let stride = [1, nx, nx * shape[1]][axis];
        let other = if axis == 1 { shape[2] } else { shape[1] };
        let other_stride = if axis == 1 { nx * shape[1] } else { nx };
        let mut block = vec![0.0; nx * n];
        for o in 0..other {
            let base = o * other_stride;
            for k in 0..n {
                let row = &values[base + k * stride..base + k * stride + nx];
                for (x, &v) in row.iter().enumerate() {
                    block[x * n + k] = v;
                }
            }
            for line in block.chunks_mut(n) {
                degrade_line(line, &kernel, ratio, &mut blur, &mut low);
            }
            for k in 0..n {
                let row = &mut values[base + k * stride..base + k * stride + nx];
                for (x, v) in row.iter_mut().enumerate() {
                    *v = block[x * n + k];
                }
            }
        }
    }
    ScalarVolume::from_parts_unchecked(image.geometry().clone(), values)
}

pub fn simulate_resolution<R: Rng + ?Sized>(
    image: &ScalarVolume,
    config: &GenerationConfig,
    rng: &mut R,
) -> (ScalarVolume, ResolutionParams) {
    let params = draw_resolution(config, rng);
    (apply_resolution(image, &params, config.target_spacing), params)
}
