use serde::{Deserialize, Serialize};

use super::SynthError;

/// Closed interval `[lo, hi]` a parameter is drawn from uniformly.
pub type Range = [f64; 2];

/// Ranges and fixed settings of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Per fine label mean, pre-normalisation intensity units.
    pub gmm_mean_range: Range,
    pub gmm_std_range: Range,
    /// Degrees, drawn per axis.
    pub rotation_range: Range,
    /// Multiplicative factor, drawn per axis.
    pub scale_range: Range,
    /// Off-diagonal affine entries, six draws.
    pub shear_range: Range,
    /// Voxels, drawn per axis.
    pub translation_range: Range,
    /// Control points per axis of the nonlinear displacement.
    pub deformation_grid: [usize; 3],
    /// Voxels.
    pub deformation_std_max: f64,
    pub bias_grid: [usize; 3],
    /// Log-intensity.
    pub bias_std_max: f64,
    pub gamma_log_std: f64,
    pub noise_std_max: f64,
    /// Millimetres.
    pub slice_spacing_max: f64,
    pub arm_removal_probability: f64,
    /// Label ids of the arms in the input label maps; may be empty.
    pub arm_labels: Vec<u32>,
    pub target_shape: [usize; 3],
    /// Millimetres, isotropic.
    pub target_spacing: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            gmm_mean_range: [0.0, 255.0],
            gmm_std_range: [0.0, 35.0],
            rotation_range: [-15.0, 15.0],
            scale_range: [0.85, 1.15],
            shear_range: [-0.012, 0.012],
            translation_range: [-20.0, 20.0],
            deformation_grid: [10, 10, 10],
            deformation_std_max: 4.0,
            bias_grid: [4, 4, 4],
            bias_std_max: 0.5,
            gamma_log_std: 0.25,
            noise_std_max: 0.08,
            slice_spacing_max: 9.0,
            arm_removal_probability: 0.5,
            arm_labels: Vec::new(),
            target_shape: [300, 300, 250],
            target_spacing: 1.5,
        }
    }
}

impl GenerationConfig {
    /// Every augmentation disabled: identity geometry, unit scale, no bias,
    /// gamma, noise or resolution loss, arms never removed. Intensity ranges
    /// are kept.
    pub fn identity() -> Self {
        Self {
            rotation_range: [0.0, 0.0],
            scale_range: [1.0, 1.0],
            shear_range: [0.0, 0.0],
            translation_range: [0.0, 0.0],
            deformation_std_max: 0.0,
            bias_std_max: 0.0,
            gamma_log_std: 0.0,
            noise_std_max: 0.0,
            slice_spacing_max: 1.5,
            arm_removal_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ranges = [
            ("gmm_mean_range", self.gmm_mean_range),
            ("gmm_std_range", self.gmm_std_range),
            ("rotation_range", self.rotation_range),
            ("scale_range", self.scale_range),
            ("shear_range", self.shear_range),
            ("translation_range", self.translation_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SynthError::InvalidConfig(format!("{name} [{lo}, {hi}] is not ordered")));
            }
        }
        if self.gmm_std_range[0] < 0.0 {
            return Err(SynthError::InvalidConfig("gmm_std_range must be non-negative".into()));
        }
        if self.scale_range[0] <= 0.0 {
            return Err(SynthError::InvalidConfig("scale_range must be positive".into()));
        }
        let non_negative = [
            ("deformation_std_max", self.deformation_std_max),
            ("bias_std_max", self.bias_std_max),
            ("gamma_log_std", self.gamma_log_std),
            ("noise_std_max", self.noise_std_max),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.arm_removal_probability) {
            return Err(SynthError::InvalidConfig(format!(
                "arm_removal_probability must be in [0, 1], got {}",
                self.arm_removal_probability
            )));
        }
        if !(self.target_spacing.is_finite() && self.target_spacing > 0.0) {
            return Err(SynthError::InvalidConfig("target_spacing must be > 0".into()));
        }
        if !(self.slice_spacing_max.is_finite() && self.slice_spacing_max >= self.target_spacing) {
            return Err(SynthError::InvalidConfig(
                "slice_spacing_max must be >= target_spacing".into(),
            ));
        }
        if self.target_shape.contains(&0) || self.deformation_grid.contains(&0) || self.bias_grid.contains(&0) {
            return Err(SynthError::InvalidConfig(
                "target_shape and grid sizes must be >= 1 per axis".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn in_range(v: f64, [lo, hi]: Range) -> bool {
    lo <= v && v <= hi
}
