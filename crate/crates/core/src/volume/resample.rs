use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use super::{Geometry, LabelMap, ScalarVolume, VolumeError};

/// Coordinates within this distance of an integer are snapped to it, so
/// grids that coincide up to affine round-off sample exactly.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

/// Volumes that can be pulled onto another grid.
///
/// Every target voxel centre is mapped to world space and back into the
/// source grid. Points outside the source voxel footprint
/// (`[-0.5, n - 0.5]` on each axis) read as 0.
pub trait Resample: Sized {
    fn resample(&self, target: &Geometry, mode: Interpolation) -> Result<Self, VolumeError>;
}

pub fn resample<V: Resample>(volume: &V, target: &Geometry, mode: Interpolation) -> Result<V, VolumeError> {
    volume.resample(target, mode)
}

impl Resample for ScalarVolume {
    fn resample(&self, target: &Geometry, mode: Interpolation) -> Result<Self, VolumeError> {
        if self.geometry() == target {
            return Ok(self.clone());
        }
        let map = SourceMap::new(self.geometry(), target)?;
        let src = self.values();
        let values = match mode {
            Interpolation::Nearest => map.nearest_volume(target, src, 0.0),
            Interpolation::Trilinear => map.trilinear_volume(target, src),
        };
        Ok(ScalarVolume::from_parts_unchecked(target.clone(), values))
    }
}

impl Resample for LabelMap {
    fn resample(&self, target: &Geometry, mode: Interpolation) -> Result<Self, VolumeError> {
        if mode != Interpolation::Nearest {
            return Err(VolumeError::InvalidMode(
                "label maps can only be resampled with nearest-neighbour interpolation".into(),
            ));
        }
        if self.geometry() == target {
            return Ok(self.clone());
        }
        let map = SourceMap::new(self.geometry(), target)?;
        let src = self.labels();
        let labels = map.nearest_volume(target, src, 0);
        LabelMap::new(target.clone(), labels)
    }
}

/// Target-voxel to source-voxel mapping.
struct SourceMap {
    shape: [usize; 3],
    matrix: Matrix4<f64>,
}

impl SourceMap {
    fn new(source: &Geometry, target: &Geometry) -> Result<Self, VolumeError> {
        let inverse = source.world_to_voxel().ok_or(VolumeError::NonInvertibleAffine)?;
        Ok(Self {
            shape: source.shape(),
            matrix: inverse * target.affine(),
        })
    }

    fn collect<T: Send + Copy + Default>(&self, target: &Geometry, sample: impl Fn([f64; 3]) -> T + Sync) -> Vec<T> {
        let [nx, ny, _] = target.shape();
        let step = self.matrix.column(0).xyz();
        let mut out = vec![T::default(); target.len()];
        out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
            for (y, row) in slab.chunks_mut(nx).enumerate() {
                let base = self.matrix * Vector4::new(0.0, y as f64, z as f64, 1.0);
                for (x, v) in row.iter_mut().enumerate() {
                    let xf = x as f64;
                    *v = sample([base[0] + xf * step[0], base[1] + xf * step[1], base[2] + xf * step[2]]);
                }
            }
        });
        out
    }

    /// Source coordinate of every target index along each axis, when the
    /// mapping has no cross terms (respacing, cropping, flips).
    fn axis_positions(&self, shape: [usize; 3]) -> Option<[Vec<f64>; 3]> {
        let m = &self.matrix;
        let separable = (0..3).all(|r| (0..3).all(|c| r == c || m[(r, c)] == 0.0));
        separable.then(|| std::array::from_fn(|a| (0..shape[a]).map(|i| m[(a, 3)] + i as f64 * m[(a, a)]).collect()))
    }

    fn strides(&self) -> [usize; 3] {
        [1, self.shape[0], self.shape[0] * self.shape[1]]
    }

    fn nearest_axis(&self, a: usize, c: f64) -> Option<usize> {
        if !(c >= -0.5 - SNAP && c <= self.shape[a] as f64 - 0.5 + SNAP) {
            return None;
        }
        // Here c + 0.5 > -SNAP, so truncation is floor clamped at 0.
        Some(((c + 0.5) as usize).min(self.shape[a] - 1) * self.strides()[a])
    }

    /// Offset of the lower neighbour, offset to the upper one, and weight.
    fn linear_axis(&self, a: usize, c: f64) -> Option<(usize, usize, f64)> {
        let n = self.shape[a];
        if !(c >= -0.5 - SNAP && c <= n as f64 - 0.5 + SNAP) {
            return None;
        }
        let mut c = c.clamp(0.0, (n - 1) as f64);
        let r = (c + 0.5) as usize as f64;
        if (c - r).abs() < SNAP {
            c = r;
        }
        let lo = c as usize;
        let stride = self.strides()[a];
        Some((lo * stride, if lo + 1 < n { stride } else { 0 }, c - lo as f64))
    }

    fn nearest(&self, p: [f64; 3]) -> Option<usize> {
        Some(self.nearest_axis(0, p[0])? + self.nearest_axis(1, p[1])? + self.nearest_axis(2, p[2])?)
    }

    fn trilinear(&self, p: [f64; 3], src: &[f64]) -> f64 {
        match (self.linear_axis(0, p[0]), self.linear_axis(1, p[1]), self.linear_axis(2, p[2])) {
            (Some(x), Some(y), Some(z)) => blend(src, x, y, z),
            _ => 0.0,
        }
    }

    fn nearest_volume<T: Send + Sync + Copy + Default>(&self, target: &Geometry, src: &[T], fill: T) -> Vec<T> {
        let Some(pos) = self.axis_positions(target.shape()) else {
            return self.collect(target, |p| self.nearest(p).map_or(fill, |i| src[i]));
        };
        let [tx, ty, tz]: [Vec<Option<usize>>; 3] =
            std::array::from_fn(|a| pos[a].iter().map(|&c| self.nearest_axis(a, c)).collect());
        separable_fill(target, fill, |x, y, z| Some(src[tx[x]? + ty[y]? + tz[z]?]))
    }

    fn trilinear_volume(&self, target: &Geometry, src: &[f64]) -> Vec<f64> {
        let Some(pos) = self.axis_positions(target.shape()) else {
            return self.collect(target, |p| self.trilinear(p, src));
        };
        let [tx, ty, tz]: [Vec<Option<(usize, usize, f64)>>; 3] =
            std::array::from_fn(|a| pos[a].iter().map(|&c| self.linear_axis(a, c)).collect());
        separable_fill(target, 0.0, |x, y, z| Some(blend(src, tx[x]?, ty[y]?, tz[z]?)))
    }
}

fn separable_fill<T: Send + Copy>(
    target: &Geometry,
    fill: T,
    sample: impl Fn(usize, usize, usize) -> Option<T> + Sync,
) -> Vec<T> {
    let [nx, ny, _] = target.shape();
    let mut out = vec![fill; target.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for (y, row) in slab.chunks_mut(nx).enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                if let Some(s) = sample(x, y, z) {
                    *v = s;
                }
            }
        }
    });
    out
}

/// Trilinear blend from per-axis (offset, step, weight) triples; x first.
fn blend(src: &[f64], x: (usize, usize, f64), y: (usize, usize, f64), z: (usize, usize, f64)) -> f64 {
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let row = |o: usize| lerp(src[o], src[o + x.1], x.2);
    let base = x.0 + y.0 + z.0;
    let c0 = lerp(row(base), row(base + y.1), y.2);
    let c1 = lerp(row(base + z.1), row(base + y.1 + z.1), y.2);
    lerp(c0, c1, z.2)
}
