//! 3D volume containers and the grid operations shared by the generator and
//! the evaluation harness.
//!
//! All containers store voxels in (x, y, z) order with x fastest, matching the
//! on-disk NIfTI layout, and are immutable once built.

mod crop;
mod geometry;
pub mod nifti;
mod resample;

use std::collections::BTreeSet;

use thiserror::Error;

pub use crop::{center_crop_pad, center_crop_pad_scalar, crop_pad_offsets};
pub use geometry::{Geometry, SPACING_TOLERANCE};
pub use nifti::{encode, parse_nifti, read_nifti, write_nifti, write_nifti_as, DataType, NiftiError, NiftiVolume, VolumeRef};
pub use resample::{resample, Interpolation, Resample};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("expected {expected} voxels, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value {value} at voxel {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid interpolation mode: {0}")]
    InvalidMode(String),
    #[error("grid-to-world affine is not invertible")]
    NonInvertibleAffine,
}

/// Real-valued volume (CT intensities, synthetic images, distance maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    geometry: Geometry,
    values: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(geometry: Geometry, values: Vec<f64>) -> Result<Self, VolumeError> {
        check_len(&geometry, values.len())?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(VolumeError::NonFinite { index, value });
        }
        Ok(Self { geometry, values })
    }

    pub fn filled(geometry: Geometry, value: f64) -> Result<Self, VolumeError> {
        let n = geometry.len();
        Self::new(geometry, vec![value; n])
    }

    pub fn from_fn(geometry: Geometry, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self, VolumeError> {
        let values = (0..geometry.len())
            .map(|i| {
                let [x, y, z] = geometry.coords(i);
                f(x, y, z)
            })
            .collect();
        Self::new(geometry, values)
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_parts_unchecked(geometry: Geometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(geometry.len(), values.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { geometry, values }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.geometry.index(x, y, z)]
    }

    /// (min, max) over all voxels.
    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Integer label volume; label 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    geometry: Geometry,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(geometry: Geometry, labels: Vec<u32>) -> Result<Self, VolumeError> {
        check_len(&geometry, labels.len())?;
        Ok(Self { geometry, labels })
    }

    pub fn from_fn(geometry: Geometry, f: impl Fn(usize, usize, usize) -> u32) -> Result<Self, VolumeError> {
        let labels = (0..geometry.len())
            .map(|i| {
                let [x, y, z] = geometry.coords(i);
                f(x, y, z)
            })
            .collect();
        Self::new(geometry, labels)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.labels[self.geometry.index(x, y, z)]
    }

    /// Distinct labels present, ascending (background included if present).
    pub fn label_set(&self) -> BTreeSet<u32> {
        let mut seen = BTreeSet::new();
        let mut last = None;
        for &l in &self.labels {
            if last != Some(l) {
                seen.insert(l);
                last = Some(l);
            }
        }
        seen
    }

    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            geometry: self.geometry.clone(),
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn to_scalar(&self) -> ScalarVolume {
        ScalarVolume::from_parts_unchecked(
            self.geometry.clone(),
            self.labels.iter().map(|&l| l as f64).collect(),
        )
    }
}

/// One region of a label map.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: Geometry,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geometry: Geometry, bits: Vec<bool>) -> Result<Self, VolumeError> {
        check_len(&geometry, bits.len())?;
        Ok(Self { geometry, bits })
    }

    pub fn from_fn(geometry: Geometry, f: impl Fn(usize, usize, usize) -> bool) -> Result<Self, VolumeError> {
        let bits = (0..geometry.len())
            .map(|i| {
                let [x, y, z] = geometry.coords(i);
                f(x, y, z)
            })
            .collect();
        Self::new(geometry, bits)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.geometry.index(x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

fn check_len(geometry: &Geometry, actual: usize) -> Result<(), VolumeError> {
    let expected = geometry.len();
    if expected != actual {
        return Err(VolumeError::SizeMismatch { expected, actual });
    }
    Ok(())
}
