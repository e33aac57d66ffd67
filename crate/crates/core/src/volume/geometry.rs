use nalgebra::{Matrix4, Vector4};

use super::VolumeError;

/// Relative tolerance between the affine's column norms and the voxel spacing.
pub const SPACING_TOLERANCE: f64 = 1e-6;

/// Voxel grid shape, physical spacing and grid-to-world affine.
///
/// Axis order is (x, y, z) with x varying fastest in memory. World
/// coordinates are in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    shape: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
}

impl Geometry {
    pub fn new(
        shape: [usize; 3],
        spacing: [f64; 3],
        affine: Matrix4<f64>,
    ) -> Result<Self, VolumeError> {
        if shape.contains(&0) {
            return Err(VolumeError::InvalidGeometry(format!(
                "shape components must be >= 1, got {shape:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidGeometry(format!(
                "spacing components must be finite and > 0, got {spacing:?}"
            )));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::InvalidGeometry(
                "affine contains non-finite entries".into(),
            ));
        }
        for axis in 0..3 {
            let norm = affine.fixed_view::<3, 1>(0, axis).norm();
            if (norm - spacing[axis]).abs() > SPACING_TOLERANCE * spacing[axis] {
                return Err(VolumeError::InvalidGeometry(format!(
                    "affine column {axis} has norm {norm}, spacing is {}",
                    spacing[axis]
                )));
            }
        }
        Ok(Self {
            shape,
            spacing,
            affine,
        })
    }

    /// Axis-aligned grid with the first voxel centre at the world origin.
    pub fn with_spacing(shape: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        let mut affine = Matrix4::identity();
        for axis in 0..3 {
            affine[(axis, axis)] = spacing[axis];
        }
        Self::new(shape, spacing, affine)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.shape[0] * (y + self.shape[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.shape[0];
        let rest = index / self.shape[0];
        [x, rest % self.shape[1], rest / self.shape[1]]
    }

    pub fn voxel_to_world(&self, voxel: [f64; 3]) -> [f64; 3] {
        let p = self.affine * Vector4::new(voxel[0], voxel[1], voxel[2], 1.0);
        [p[0], p[1], p[2]]
    }

    /// World-to-voxel matrix, `None` when the affine is singular.
    pub fn world_to_voxel(&self) -> Option<Matrix4<f64>> {
        self.affine.try_inverse()
    }

    /// Copy of this geometry with a new shape and the grid origin moved by
    /// `offset` voxels, so that output voxel `o` sits where input voxel
    /// `o + offset` was.
    pub fn shifted(&self, shape: [usize; 3], offset: [f64; 3]) -> Result<Self, VolumeError> {
        let mut translate = Matrix4::identity();
        for axis in 0..3 {
            translate[(axis, 3)] = offset[axis];
        }
        Self::new(shape, self.spacing, self.affine * translate)
    }

    /// Grid covering the same field of view at a new spacing. Each axis gets
    /// `round(n * old / new)` voxels (at least one) and the outer voxel faces
    /// of the first voxel line up.
    pub fn respaced(&self, spacing: [f64; 3]) -> Result<Self, VolumeError> {
        let mut step = Matrix4::identity();
        let mut shape = [0usize; 3];
        for axis in 0..3 {
            let ratio = spacing[axis] / self.spacing[axis];
            shape[axis] = ((self.shape[axis] as f64 / ratio).round() as usize).max(1);
            step[(axis, axis)] = ratio;
            step[(axis, 3)] = 0.5 * ratio - 0.5;
        }
        Self::new(shape, spacing, self.affine * step)
    }

    /// Same shape, and spacing/affine equal within `tol` relative to each entry's magnitude.
    pub fn approx_eq(&self, other: &Geometry, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0);
        self.shape == other.shape
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(&a, &b)| close(a, b))
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(&a, &b)| close(a, b))
    }
}
