//! Overlap, surface-distance and volume metrics for segmentation masks.

mod edt;
mod surface;

use thiserror::Error;

use crate::volume::{BinaryMask, LabelMap, ScalarVolume, VolumeError, SPACING_TOLERANCE};

pub use edt::distance_transform;
pub use surface::{extract_surface, hausdorff, hd95, percentile, surface_distance_percentile, HausdorffMode};

/// Smoothing term of the soft Dice loss.
pub const SOFT_DICE_EPSILON: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub(crate) fn check_geometry(a: &BinaryMask, b: &BinaryMask) -> Result<(), MetricError> {
    if !a.geometry().approx_eq(b.geometry(), SPACING_TOLERANCE) {
        return Err(MetricError::GeometryMismatch(format!(
            "{:?} vs {:?}",
            a.geometry().shape(),
            b.geometry().shape()
        )));
    }
    Ok(())
}

/// Sørensen–Dice overlap. `None` when either mask is empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<Option<f64>, MetricError> {
    check_geometry(a, b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na == 0 || nb == 0 {
        return Ok(None);
    }
    Ok(Some(2.0 * both as f64 / (na + nb) as f64))
}

/// Volume of `label` in millilitres.
pub fn region_volume(labels: &LabelMap, label: u32) -> f64 {
    labels.count(label) as f64 * labels.geometry().voxel_volume_mm3() / 1000.0
}

/// Mean soft Dice loss over foreground classes 1..C.
///
/// `probabilities[c]` holds class `c`'s per-voxel probability; class 0 is
/// background and excluded from the mean.
pub fn soft_dice_loss(probabilities: &[ScalarVolume], target: &LabelMap) -> Result<f64, MetricError> {
    let classes = probabilities.len();
    if classes < 2 {
        return Err(MetricError::InvalidProbabilities(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    for p in probabilities {
        if !p.geometry().approx_eq(target.geometry(), SPACING_TOLERANCE) {
            return Err(MetricError::GeometryMismatch("probability map vs target".into()));
        }
        if let Some(v) = p.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MetricError::InvalidProbabilities(format!("value {v} outside [0, 1]")));
        }
    }
    if let Some(&l) = target.labels().iter().find(|&&l| l as usize >= classes) {
        return Err(MetricError::InvalidProbabilities(format!(
            "target label {l} has no probability channel"
        )));
    }
    let mut total = 0.0;
    for (c, p) in probabilities.iter().enumerate().skip(1) {
        let (mut inter, mut sp, mut st) = (0.0, 0.0, 0.0);
        for (&pv, &l) in p.values().iter().zip(target.labels()) {
            let t = (l as usize == c) as u8 as f64;
            inter += pv * t;
            sp += pv;
            st += t;
        }
        total += 1.0 - (2.0 * inter + SOFT_DICE_EPSILON) / (sp + st + SOFT_DICE_EPSILON);
    }
    Ok(total / (classes - 1) as f64)
}

/// Per-region comparison of a reference and a predicted mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMetrics {
    pub dice: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub gt_volume_ml: f64,
    pub pred_volume_ml: f64,
}

impl RegionMetrics {
    pub fn compute(gt: &BinaryMask, pred: &BinaryMask) -> Result<Self, MetricError> {
        let ml = gt.geometry().voxel_volume_mm3() / 1000.0;
        Ok(Self {
            dice: dice(gt, pred)?,
            hd95_mm: hd95(gt, pred)?,
            gt_volume_ml: gt.count() as f64 * ml,
            pred_volume_ml: pred.count() as f64 * ml,
        })
    }
}
