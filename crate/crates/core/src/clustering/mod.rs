//! Intensity-driven subdivision of label maps.
//!
//! Every label of a CT segmentation is split into sub-regions by fitting a 1D
//! Gaussian mixture to the CT intensities inside it and assigning each voxel
//! to its most responsible component. The number of components is drawn per
//! label: from one set for foreground labels and from another, larger set for
//! the background (label 0).
//!
//! Fitting can happen on demand ([`cluster_labelmap`]) or ahead of time for
//! every allowed component count ([`fit_cluster_models`]), with the count
//! chosen later by [`ClusterFits::draw`]. Both paths consume the random
//! stream identically and produce the same fine label map for the same seed.

mod gmm;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{LabelMap, ScalarVolume, VolumeError};

pub use gmm::{assign_clusters, fit_gmm_1d, EmFit, EmOptions, GmmComponent, GmmModel, WEIGHT_TOLERANCE};
use gmm::Assigner;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no samples to fit")]
    EmptyInput,
    #[error("{samples} samples cannot support {k} components")]
    InsufficientData { samples: usize, k: usize },
    #[error("invalid mixture: {0}")]
    InvalidModel(String),
    #[error("invalid clustering config: {0}")]
    InvalidConfig(String),
    #[error("CT and label geometries differ")]
    GeometryMismatch,
    #[error("label {0} has no cluster entry")]
    MissingLabel(u32),
    #[error("{path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k_foreground_choices: Vec<usize>,
    pub k_background_choices: Vec<usize>,
    pub em_tolerance: f64,
    pub em_max_iters: usize,
    pub variance_floor: f64,
    pub seed: u64,
    /// When set, background voxels darker than this are left out of the
    /// background fit (they are still assigned afterwards). `None` fits the
    /// whole label-0 pool.
    pub background_min_intensity: Option<f64>,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_foreground_choices: vec![1, 2, 3],
            k_background_choices: vec![3, 4, 5, 6, 7],
            em_tolerance: 1e-6,
            em_max_iters: 100,
            variance_floor: 1e-4,
            seed: 0,
            background_min_intensity: None,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k_foreground_choices.is_empty() || self.k_background_choices.is_empty() {
            return Err(ClusterError::InvalidConfig("cluster-count choice sets must be non-empty".into()));
        }
        if self
            .k_foreground_choices
            .iter()
            .chain(&self.k_background_choices)
            .any(|&k| k == 0)
        {
            return Err(ClusterError::InvalidConfig("cluster counts must be >= 1".into()));
        }
        if !(self.em_tolerance > 0.0) || self.em_max_iters == 0 || !(self.variance_floor > 0.0) {
            return Err(ClusterError::InvalidConfig(
                "need em_tolerance > 0, em_max_iters >= 1, variance_floor > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            tolerance: self.em_tolerance,
            max_iters: self.em_max_iters,
            variance_floor: self.variance_floor,
        }
    }

    fn choices_for(&self, label: u32) -> &[usize] {
        if label == 0 {
            &self.k_background_choices
        } else {
            &self.k_foreground_choices
        }
    }
}

/// Sub-clusters of one original label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelClusters {
    pub label: u32,
    /// Component count drawn from the choice set.
    pub drawn_k: usize,
    /// `model.k()`; lower than `drawn_k` when the label had too few voxels.
    pub k: usize,
    pub model: GmmModel,
    /// Fine label id of each component, in component order.
    pub fine_ids: Vec<u32>,
}

/// Mapping from original labels to fine labels with their mixture components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTable {
    entries: Vec<LabelClusters>,
}

impl ClusterTable {
    fn from_models(models: Vec<(u32, usize, GmmModel)>) -> Self {
        let mut next = 1u32;
        let entries = models
            .into_iter()
            .map(|(label, drawn_k, model)| {
                let k = model.k();
                let fine_ids = (next..next + k as u32).collect();
                next += k as u32;
                LabelClusters {
                    label,
                    drawn_k,
                    k,
                    model,
                    fine_ids,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[LabelClusters] {
        &self.entries
    }

    pub fn entry(&self, label: u32) -> Option<&LabelClusters> {
        self.entries
            .binary_search_by_key(&label, |e| e.label)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Total number of fine labels.
    pub fn fine_label_count(&self) -> usize {
        self.entries.iter().map(|e| e.k).sum()
    }

    /// Original label of every fine id.
    pub fn parent_of(&self) -> BTreeMap<u32, u32> {
        self.entries
            .iter()
            .flat_map(|e| e.fine_ids.iter().map(move |&f| (f, e.label)))
            .collect()
    }

    /// Relabels every voxel with the fine id of its most responsible
    /// component under its label's mixture.
    pub fn apply(&self, ct: &ScalarVolume, labels: &LabelMap) -> Result<LabelMap, ClusterError> {
        check_geometry(ct, labels)?;
        let max_label = labels.labels().iter().copied().max().unwrap_or(0) as usize;
        let mut lookup: Vec<Option<(Assigner, &[u32])>> = (0..=max_label).map(|_| None).collect();
        for e in &self.entries {
            if let Some(slot) = lookup.get_mut(e.label as usize) {
                *slot = Some((Assigner::new(&e.model), &e.fine_ids));
            }
        }
        let fine = labels
            .labels()
            .iter()
            .zip(ct.values())
            .map(|(&l, &x)| match &lookup[l as usize] {
                Some((assigner, ids)) => Ok(ids[assigner.assign(x)]),
                None => Err(ClusterError::MissingLabel(l)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LabelMap::new(labels.geometry().clone(), fine)?)
    }
}

/// Mixtures fitted ahead of time for every allowed component count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFits {
    /// CT volume the fits were computed from, so a cache can be used on its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct_path: Option<PathBuf>,
    pub labels: Vec<LabelFits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFits {
    pub label: u32,
    pub voxel_count: usize,
    /// Keyed by the effective component count.
    pub models: BTreeMap<usize, GmmModel>,
}

impl ClusterFits {
    /// Draws a component count per label and picks the matching fit.
    pub fn draw<R: Rng + ?Sized>(&self, config: &ClusteringConfig, rng: &mut R) -> Result<ClusterTable, ClusterError> {
        config.validate()?;
        let counts: Vec<(u32, usize)> = self.labels.iter().map(|l| (l.label, l.voxel_count)).collect();
        let draws = draw_counts(&counts, config, rng);
        let models = draws
            .into_iter()
            .zip(&self.labels)
            .map(|((label, drawn, k), fits)| {
                fits.models
                    .get(&k)
                    .cloned()
                    .map(|m| (label, drawn, m))
                    .ok_or_else(|| ClusterError::InvalidConfig(format!("cache has no {k}-component fit for label {label}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ClusterTable::from_models(models))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClusterError> {
        let path = path.as_ref();
        let cache_err = |message: String| ClusterError::Cache {
            path: path.to_path_buf(),
            message,
        };
        let json = serde_json::to_string_pretty(self).map_err(|e| cache_err(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| cache_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClusterError> {
        let path = path.as_ref();
        let cache_err = |message: String| ClusterError::Cache {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| cache_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| cache_err(e.to_string()))
    }
}

/// (label, drawn K, effective K) per label, in ascending label order.
fn draw_counts<R: Rng + ?Sized>(
    labels: &[(u32, usize)],
    config: &ClusteringConfig,
    rng: &mut R,
) -> Vec<(u32, usize, usize)> {
    labels
        .iter()
        .map(|&(label, voxels)| {
            let choices = config.choices_for(label);
            let drawn = choices[rng.random_range(0..choices.len())];
            (label, drawn, drawn.min(voxels))
        })
        .collect()
}

fn check_geometry(ct: &ScalarVolume, labels: &LabelMap) -> Result<(), ClusterError> {
    if !ct.geometry().approx_eq(labels.geometry(), 1e-6) {
        return Err(ClusterError::GeometryMismatch);
    }
    Ok(())
}

/// CT intensities grouped by label, ascending label order. Background voxels
/// below `background_min_intensity` are dropped from the pool (unless that
/// would empty it).
fn samples_by_label(ct: &ScalarVolume, labels: &LabelMap, config: &ClusteringConfig) -> Vec<(u32, Vec<f64>)> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (&l, &x) in labels.labels().iter().zip(ct.values()) {
        groups.entry(l).or_default().push(x);
    }
    if let (Some(floor), Some(bg)) = (config.background_min_intensity, groups.get_mut(&0)) {
        let kept: Vec<f64> = bg.iter().copied().filter(|&x| x >= floor).collect();
        if !kept.is_empty() {
            *bg = kept;
        }
    }
    groups.into_iter().collect()
}

/// Draws component counts with a generator seeded from `seed`, fits one
/// mixture per label and relabels the map.
pub fn cluster_labelmap(
    ct: &ScalarVolume,
    labels: &LabelMap,
    config: &ClusteringConfig,
    seed: u64,
) -> Result<(LabelMap, ClusterTable), ClusterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cluster_labelmap_with(ct, labels, config, &mut rng)
}

pub fn cluster_labelmap_with<R: Rng + ?Sized>(
    ct: &ScalarVolume,
    labels: &LabelMap,
    config: &ClusteringConfig,
    rng: &mut R,
) -> Result<(LabelMap, ClusterTable), ClusterError> {
    config.validate()?;
    check_geometry(ct, labels)?;
    let groups = samples_by_label(ct, labels, config);
    let counts: Vec<(u32, usize)> = groups.iter().map(|(l, s)| (*l, s.len())).collect();
    let draws = draw_counts(&counts, config, rng);
    let options = config.em_options();
    let models = groups
        .par_iter()
        .zip(draws.par_iter())
        .map(|((label, samples), &(_, drawn, k))| {
            fit_gmm_1d(samples, k, &options).map(|fit| (*label, drawn, fit.model))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = ClusterTable::from_models(models);
    let fine = table.apply(ct, labels)?;
    Ok((fine, table))
}

/// Fits every allowed component count for every label present.
pub fn fit_cluster_models(
    ct: &ScalarVolume,
    labels: &LabelMap,
    config: &ClusteringConfig,
) -> Result<ClusterFits, ClusterError> {
    config.validate()?;
    check_geometry(ct, labels)?;
    let options = config.em_options();
    let groups = samples_by_label(ct, labels, config);
    let fits = groups
        .par_iter()
        .map(|(label, samples)| {
            let mut ks: Vec<usize> = config
                .choices_for(*label)
                .iter()
                .map(|&k| k.min(samples.len()))
                .collect();
            ks.sort_unstable();
            ks.dedup();
            let models = ks
                .into_iter()
                .map(|k| fit_gmm_1d(samples, k, &options).map(|f| (k, f.model)))
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            Ok(LabelFits {
                label: *label,
                voxel_count: samples.len(),
                models,
            })
        })
        .collect::<Result<Vec<_>, ClusterError>>()?;
    Ok(ClusterFits {
        ct_path: None,
        labels: fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn phantom() -> (ScalarVolume, LabelMap) {
        let g = Geometry::with_spacing([12, 10, 8], [1.5; 3]).unwrap();
        let labels = LabelMap::from_fn(g.clone(), |x, y, _| match (x, y) {
            (0..=3, _) => 0,
            (4..=7, 0..=4) => 1,
            (4..=7, _) => 2,
            _ => 3,
        })
        .unwrap();
        let ct = ScalarVolume::from_fn(g, |x, y, z| match (x, y) {
            (0..=3, _) => -1000.0 + (x * 37 + y * 11 + z) as f64 % 300.0,
            (4..=7, 0..=4) => if z < 4 { 40.0 } else { 180.0 },
            (4..=7, _) => 60.0,
            _ => (x * y + z) as f64,
        })
        .unwrap();
        (ct, labels)
    }

    #[test]
    fn fine_labels_partition_parents() {
        let (ct, labels) = phantom();
        for seed in 0..20 {
            let (fine, table) = cluster_labelmap(&ct, &labels, &ClusteringConfig::default(), seed).unwrap();
            let parent = table.parent_of();
            for (f, l) in fine.labels().iter().zip(labels.labels()) {
                assert_eq!(parent[f], *l);
            }
            assert_eq!(table.fine_label_count(), table.entries().iter().map(|e| e.k).sum::<usize>());
        }
    }

    #[test]
    fn drawn_counts_respect_choice_sets() {
        let (ct, labels) = phantom();
        let cfg = ClusteringConfig::default();
        for seed in 0..50 {
            let (_, table) = cluster_labelmap(&ct, &labels, &cfg, seed).unwrap();
            for e in table.entries() {
                let allowed = if e.label == 0 { &cfg.k_background_choices } else { &cfg.k_foreground_choices };
                assert!(allowed.contains(&e.drawn_k));
            }
        }
    }

    #[test]
    fn same_seed_same_map() {
        let (ct, labels) = phantom();
        let cfg = ClusteringConfig::default();
        let a = cluster_labelmap(&ct, &labels, &cfg, 9).unwrap();
        let b = cluster_labelmap(&ct, &labels, &cfg, 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn cached_fits_reproduce_on_demand_clustering() {
        let (ct, labels) = phantom();
        let cfg = ClusteringConfig::default();
        let fits = fit_cluster_models(&ct, &labels, &cfg).unwrap();
        for seed in 0..10 {
            let (fine, table) = cluster_labelmap(&ct, &labels, &cfg, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cached = fits.draw(&cfg, &mut rng).unwrap();
            assert_eq!(cached, table);
            assert_eq!(cached.apply(&ct, &labels).unwrap(), fine);
        }
    }

    #[test]
    fn small_label_gets_reduced_k() {
        let g = Geometry::with_spacing([4, 1, 1], [1.0; 3]).unwrap();
        let labels = LabelMap::new(g.clone(), vec![0, 0, 0, 5]).unwrap();
        let ct = ScalarVolume::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cfg = ClusteringConfig {
            k_foreground_choices: vec![3],
            ..ClusteringConfig::default()
        };
        let (_, table) = cluster_labelmap(&ct, &labels, &cfg, 1).unwrap();
        let fg = table.entry(5).unwrap();
        assert_eq!((fg.drawn_k, fg.k), (3, 1));
        let bg = table.entry(0).unwrap();
        assert_eq!(bg.k, 3);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let (ct, _) = phantom();
        let other = LabelMap::new(Geometry::with_spacing([12, 10, 8], [1.0; 3]).unwrap(), vec![0; 960]).unwrap();
        assert!(matches!(
            cluster_labelmap(&ct, &other, &ClusteringConfig::default(), 0),
            Err(ClusterError::GeometryMismatch)
        ));
    }

    #[test]
    fn cache_json_roundtrip() {
        let (ct, labels) = phantom();
        let mut fits = fit_cluster_models(&ct, &labels, &ClusteringConfig::default()).unwrap();
        fits.ct_path = Some(PathBuf::from("ct/s0001.nii.gz"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s0001.clusters.json");
        fits.save(&path).unwrap();
        assert_eq!(ClusterFits::load(&path).unwrap(), fits);
    }

    #[test]
    fn background_floor_excludes_dark_voxels_from_fit() {
        let g = Geometry::with_spacing([6, 1, 1], [1.0; 3]).unwrap();
        let labels = LabelMap::new(g.clone(), vec![0; 6]).unwrap();
        let ct = ScalarVolume::new(g, vec![-1000.0, -1000.0, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let cfg = ClusteringConfig {
            k_background_choices: vec![1],
            background_min_intensity: Some(-500.0),
            ..ClusteringConfig::default()
        };
        let (_, table) = cluster_labelmap(&ct, &labels, &cfg, 0).unwrap();
        assert_eq!(table.entry(0).unwrap().model.components()[0].mean, 25.0);
    }
}
