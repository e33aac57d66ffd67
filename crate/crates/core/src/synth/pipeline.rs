use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_labelmap_with, ClusterFits, ClusterTable, ClusteringConfig};
use crate::volume::{
    center_crop_pad, center_crop_pad_scalar, resample, Geometry, Interpolation, LabelMap, ScalarVolume,
    SPACING_TOLERANCE,
};

use super::config::{in_range, GenerationConfig};
use super::intensity::{add_noise, apply_bias, apply_gamma, draw_bias, draw_gamma, draw_label_intensities, draw_noise_std, synthesize_intensities};
use super::resolution::{apply_resolution, draw_resolution, ResolutionParams};
use super::spatial::{sample_spatial_transform, AffineParams};
use super::{pair_rng, remove_arms, SynthError};

/// Where fine labels come from.
#[derive(Debug, Clone, Copy)]
pub enum ClusterSource<'a> {
    /// No subdivision: every coarse label is its own fine label.
    None,
    /// Pre-fitted mixtures; the component count is drawn per pair.
    Cached {
        ct: &'a ScalarVolume,
        fits: &'a ClusterFits,
        clustering: &'a ClusteringConfig,
    },
    /// Mixtures fitted per pair on the cropped CT.
    OnDemand {
        ct: &'a ScalarVolume,
        clustering: &'a ClusteringConfig,
    },
}

impl ClusterSource<'_> {
    fn ct(&self) -> Option<&ScalarVolume> {
        match self {
            ClusterSource::None => None,
            ClusterSource::Cached { ct, .. } | ClusterSource::OnDemand { ct, .. } => Some(ct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCount {
    pub label: u32,
    pub drawn_k: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineIntensity {
    pub fine_label: u32,
    pub parent_label: u32,
    pub mean: f64,
    pub std: f64,
}

/// Everything drawn for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawnParams {
    pub seed: u64,
    pub pair_index: u64,
    pub arms_removed: bool,
    pub affine: AffineParams,
    pub deformation_std: f64,
    pub cluster_counts: Vec<ClusterCount>,
    pub intensities: Vec<FineIntensity>,
    pub bias_std: f64,
    pub log_gamma: f64,
    /// Set when the image was constant before contrast adjustment.
    pub gamma_degenerate: bool,
    pub noise_std: f64,
    pub resolution: ResolutionParams,
}

impl DrawnParams {
    /// Checks every ranged draw against `config`.
    pub fn check(&self, config: &GenerationConfig) -> Result<(), SynthError> {
        let mut checks: Vec<(String, f64, [f64; 2])> = Vec::new();
        for a in 0..3 {
            checks.push((format!("rotation_deg[{a}]"), self.affine.rotation_deg[a], config.rotation_range));
            checks.push((format!("scale[{a}]"), self.affine.scale[a], config.scale_range));
            checks.push((format!("translation[{a}]"), self.affine.translation[a], config.translation_range));
        }
        for (i, &s) in self.affine.shear.iter().enumerate() {
            checks.push((format!("shear[{i}]"), s, config.shear_range));
        }
        checks.push(("deformation_std".into(), self.deformation_std, [0.0, config.deformation_std_max]));
        checks.push(("bias_std".into(), self.bias_std, [0.0, config.bias_std_max]));
        checks.push(("noise_std".into(), self.noise_std, [0.0, config.noise_std_max]));
        checks.push((
            "resolution.spacing_mm".into(),
            self.resolution.spacing_mm,
            [config.target_spacing, config.slice_spacing_max],
        ));
        for f in &self.intensities {
            checks.push((format!("mean of fine label {}", f.fine_label), f.mean, config.gmm_mean_range));
            checks.push((format!("std of fine label {}", f.fine_label), f.std, config.gmm_std_range));
        }
        for (name, v, range) in checks {
            if !in_range(v, range) {
                return Err(SynthError::OutOfRange(format!("{name} = {v} not in {range:?}")));
            }
        }
        if self.resolution.axis > 2 {
            return Err(SynthError::OutOfRange(format!("resolution axis {}", self.resolution.axis)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// In [0, 1].
    pub image: ScalarVolume,
    /// Deformed coarse labels.
    pub target: LabelMap,
    /// Deformed fine labels the image was rendered from.
    pub fine: LabelMap,
    pub provenance: DrawnParams,
}

/// Generates pair 0 of a run seeded with `seed`.
pub fn generate_training_pair(
    coarse: &LabelMap,
    source: ClusterSource<'_>,
    config: &GenerationConfig,
    seed: u64,
) -> Result<TrainingPair, SynthError> {
    let mut rng = pair_rng(seed, 0);
    generate_training_pair_with(coarse, source, config, &mut rng, seed, 0)
}

/// Runs the full pipeline on `rng`. `seed` and `pair_index` are recorded in
/// the provenance only.
pub fn generate_training_pair_with<R: Rng + ?Sized>(
    coarse: &LabelMap,
    source: ClusterSource<'_>,
    config: &GenerationConfig,
    rng: &mut R,
    seed: u64,
    pair_index: u64,
) -> Result<TrainingPair, SynthError> {
    config.validate()?;
    let ct = source.ct();
    if let Some(ct) = ct {
        if !ct.geometry().approx_eq(coarse.geometry(), SPACING_TOLERANCE) {
            return Err(SynthError::ShapeMismatch("CT and label map geometries differ".into()));
        }
    }

    // Arm removal; removed arms read as air in the CT.
    let (labels, arms_removed) = remove_arms(coarse, &config.arm_labels, config.arm_removal_probability, rng);
    let ct = ct.map(|ct| {
        if !arms_removed || config.arm_labels.is_empty() {
            return ct.clone();
        }
        let (air, _) = ct.min_max();
        let values = ct
            .values()
            .iter()
            .zip(coarse.labels())
            .map(|(&v, l)| if config.arm_labels.contains(l) { air } else { v })
            .collect();
        ScalarVolume::new(ct.geometry().clone(), values).expect("finite")
    });

    // Canonical grid.
    let spacing = [config.target_spacing; 3];
    let (labels, ct) = if labels.geometry().spacing().iter().all(|&s| {
        (s - config.target_spacing).abs() <= SPACING_TOLERANCE * config.target_spacing
    }) {
        (labels, ct)
    } else {
        let grid: Geometry = labels.geometry().respaced(spacing)?;
        let l = resample(&labels, &grid, Interpolation::Nearest)?;
        let c = ct.map(|c| resample(&c, &grid, Interpolation::Trilinear)).transpose()?;
        (l, c)
    };
    let labels = center_crop_pad(&labels, config.target_shape)?;
    let ct = ct
        .map(|c| {
            let (air, _) = c.min_max();
            center_crop_pad_scalar(&c, config.target_shape, air)
        })
        .transpose()?;

    let transform = sample_spatial_transform(config, rng);

    // Fine labels on the canonical grid. Relabelling is voxelwise, so doing
    // it before the warp gives the same map as doing it after.
    let (fine, table): (LabelMap, Option<ClusterTable>) = match (source, &ct) {
        (ClusterSource::None, _) => (labels.clone(), None),
        (ClusterSource::Cached { fits, clustering, .. }, Some(ct)) => {
            let table = fits.draw(clustering, rng)?;
            (table.apply(ct, &labels)?, Some(table))
        }
        (ClusterSource::OnDemand { clustering, .. }, Some(ct)) => {
            let (fine, table) = cluster_labelmap_with(ct, &labels, clustering, rng)?;
            (fine, Some(table))
        }
        _ => unreachable!("clustering sources carry a CT"),
    };
    drop(ct);

    let (cluster_counts, mut parent): (Vec<ClusterCount>, BTreeMap<u32, u32>) = match &table {
        Some(t) => (
            t.entries()
                .iter()
                .map(|e| ClusterCount {
                    label: e.label,
                    drawn_k: e.drawn_k,
                    k: e.k,
                })
                .collect(),
            t.parent_of(),
        ),
        None => (Vec::new(), labels.label_set().into_iter().map(|l| (l, l)).collect()),
    };

    // Samples from outside the grid are background; in the fine map that is
    // the first background sub-region.
    let outside = table
        .as_ref()
        .and_then(|t| t.entry(0))
        .map_or(0, |e| e.fine_ids[0]);
    parent.entry(outside).or_insert(0);

    drop(labels);
    let fine = transform.warp_labels(&fine, outside)?;
    // Fine labels nest in their parents, so the warped target is the parent
    // of the warped fine map (out-of-grid samples map to 0 either way).
    let max_fine = parent.keys().next_back().copied().unwrap_or(0) as usize;
    let mut lut = vec![0u32; max_fine + 1];
    for (&f, &p) in &parent {
        lut[f as usize] = p;
    }
    let target = LabelMap::new(
        fine.geometry().clone(),
        fine.labels().iter().map(|&f| lut[f as usize]).collect(),
    )?;

    let gmm = draw_label_intensities(parent.keys().copied(), config, rng);
    let image = synthesize_intensities(&fine, &gmm, rng)?;

    let bias = draw_bias(config, rng);
    let image = apply_bias(&image, &bias)?;
    let log_gamma = draw_gamma(config, rng);
    let (image, gamma_degenerate) = apply_gamma(&image, log_gamma);
    let noise_std = draw_noise_std(config, rng);
    let image = add_noise(&image, noise_std, rng);
    let resolution = draw_resolution(config, rng);
    let image = renormalize(apply_resolution(&image, &resolution, config.target_spacing));

    let provenance = DrawnParams {
        seed,
        pair_index,
        arms_removed,
        affine: transform.affine.clone(),
        deformation_std: transform.deformation_std,
        cluster_counts,
        intensities: gmm
            .iter()
            .map(|(&id, p)| FineIntensity {
                fine_label: id,
                parent_label: parent[&id],
                mean: p.mean,
                std: p.std,
            })
            .collect(),
        bias_std: bias.std,
        log_gamma,
        gamma_degenerate,
        noise_std,
        resolution,
    };
    provenance.check(config)?;
    Ok(TrainingPair {
        image,
        target,
        fine,
        provenance,
    })
}

/// Min-max rescale to exactly [0, 1]; constant images are left unchanged.
fn renormalize(image: ScalarVolume) -> ScalarVolume {
    let (lo, hi) = image.min_max();
    if !(hi > lo) || (lo == 0.0 && hi == 1.0) {
        return image;
    }
    let geometry = image.geometry().clone();
    let span = hi - lo;
    let values = image.into_values().into_iter().map(|v| (v - lo) / span).collect();
    ScalarVolume::new(geometry, values).expect("finite")
}
