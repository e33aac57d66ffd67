//! Random affine plus smooth nonlinear deformation, applied to label maps by
//! nearest-neighbour pullback.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume::LabelMap;

use super::config::GenerationConfig;
use super::grid::{control_spacing, SlabUpsampler};
use super::{uniform, SynthError};

/// One draw of the affine part. The transform maps an output voxel `p` to
/// the source position `c + A (p - c) + t` with `c` the volume centre and
/// `A = R S H` (rotation, scale, shear).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    /// Degrees about x, y and z; applied x first.
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
    /// Off-diagonal entries of `H` in row-major order: xy, xz, yx, yz, zx, zy.
    pub shear: [f64; 6],
    /// Voxels.
    pub translation: [f64; 3],
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: [0.0; 3],
            scale: [1.0; 3],
            shear: [0.0; 6],
            translation: [0.0; 3],
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let [ax, ay, az] = self.rotation_deg.map(f64::to_radians);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ax.cos(), -ax.sin(), 0.0, ax.sin(), ax.cos());
        let ry = Matrix3::new(ay.cos(), 0.0, ay.sin(), 0.0, 1.0, 0.0, -ay.sin(), 0.0, ay.cos());
        let rz = Matrix3::new(az.cos(), -az.sin(), 0.0, az.sin(), az.cos(), 0.0, 0.0, 0.0, 1.0);
        let s = Matrix3::from_diagonal(&Vector3::from(self.scale));
        let h = self.shear;
        let shear = Matrix3::new(1.0, h[0], h[1], h[2], 1.0, h[3], h[4], h[5], 1.0);
        rz * ry * rx * s * shear
    }
}

/// Dense per-voxel displacement in voxels, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    shape: [usize; 3],
    data: Vec<[f32; 3]>,
}

impl DisplacementField {
    pub fn new(shape: [usize; 3], data: Vec<[f32; 3]>) -> Result<Self, SynthError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(SynthError::ShapeMismatch(format!(
                "field of shape {shape:?} needs {expected} vectors, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn constant(shape: [usize; 3], d: [f32; 3]) -> Self {
        Self {
            shape,
            data: vec![d; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[[f32; 3]] {
        &self.data
    }
}

/// A drawn spatial transform: affine parameters plus the control values of
/// the nonlinear part (per component, x-fastest over `grid`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTransform {
    pub affine: AffineParams,
    pub deformation_std: f64,
    pub grid: [usize; 3],
    pub control: [Vec<f64>; 3],
}

impl SpatialTransform {
    pub fn identity(grid: [usize; 3]) -> Self {
        let n = grid.iter().product();
        Self {
            affine: AffineParams::identity(),
            deformation_std: 0.0,
            grid,
            control: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    /// Dense field of the nonlinear part only.
    pub fn nonlinear_field(&self, shape: [usize; 3]) -> DisplacementField {
        self.build(shape, false)
    }

    /// Dense field of the full transform.
    pub fn field(&self, shape: [usize; 3]) -> DisplacementField {
        self.build(shape, true)
    }

    /// Upper bound on the absolute difference of the nonlinear displacement
    /// between neighbouring voxels along each axis.
    pub fn nonlinear_gradient_bound(&self, shape: [usize; 3]) -> [f64; 3] {
        let spacing = control_spacing(self.grid, shape);
        let [gx, gy, _] = self.grid;
        std::array::from_fn(|axis| {
            if spacing[axis].is_infinite() {
                return 0.0;
            }
            let stride = [1, gx, gx * gy][axis];
            let mut worst = 0.0f64;
            for comp in &self.control {
                for (i, &v) in comp.iter().enumerate() {
                    let pos = [i % gx, (i / gx) % gy, i / (gx * gy)];
                    if pos[axis] + 1 < self.grid[axis] {
                        worst = worst.max((comp[i + stride] - v).abs());
                    }
                }
            }
            worst / spacing[axis]
        })
    }

    fn build(&self, shape: [usize; 3], with_affine: bool) -> DisplacementField {
        let plane = shape[0] * shape[1];
        let mut data = vec![[0f32; 3]; plane * shape[2]];
        let slabs = SlabUpsampler::new(self.grid, shape);
        data.par_chunks_mut(plane).enumerate().for_each_init(
            || vec![0.0; plane],
            |scratch, (z, slab)| self.fill_slab(&slabs, shape, z, with_affine, scratch, slab),
        );
        DisplacementField { shape, data }
    }

    /// Displacements of slab `z` into `out`.
    fn fill_slab(
        &self,
        slabs: &SlabUpsampler,
        shape: [usize; 3],
        z: usize,
        with_affine: bool,
        scratch: &mut [f64],
        out: &mut [[f32; 3]],
    ) {
        out.fill([0.0; 3]);
        for (comp, control) in self.control.iter().enumerate() {
            if control.iter().all(|&v| v == 0.0) {
                continue;
            }
            slabs.slab(control, z, scratch);
            for (d, &v) in out.iter_mut().zip(scratch.iter()) {
                d[comp] = v as f32;
            }
        }
        if with_affine {
            let m = self.affine.matrix();
            let a: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|k| m[(r, k)]));
            let t = self.affine.translation;
            let c = shape.map(|s| (s as f64 - 1.0) / 2.0);
            let qz = z as f64 - c[2];
            for (y, row) in out.chunks_mut(shape[0]).enumerate() {
                let qy = y as f64 - c[1];
                let p = [0.0, y as f64, z as f64];
                let base: [f64; 3] = std::array::from_fn(|r| c[r] + a[r][1] * qy + a[r][2] * qz + t[r] - p[r]);
                for (x, d) in row.iter_mut().enumerate() {
                    let qx = x as f64 - c[0];
                    d[0] += (base[0] + a[0][0] * qx - x as f64) as f32;
                    d[1] += (base[1] + a[1][0] * qx) as f32;
                    d[2] += (base[2] + a[2][0] * qx) as f32;
                }
            }
        }
    }

    /// Same result as `warp_labels_with_fill(labels, &self.field(shape), fill)`
    /// without holding the dense field.
    pub fn warp_labels(&self, labels: &LabelMap, fill: u32) -> Result<LabelMap, SynthError> {
        let shape = labels.geometry().shape();
        let plane = shape[0] * shape[1];
        let slabs = SlabUpsampler::new(self.grid, shape);
        let src = Compact::new(labels.labels());
        let mut out = vec![fill; labels.labels().len()];
        out.par_chunks_mut(plane).enumerate().for_each_init(
            || (vec![0.0; plane], vec![[0f32; 3]; plane]),
            |(scratch, disp), (z, slab)| {
                self.fill_slab(&slabs, shape, z, true, scratch, disp);
                src.pull_slab(shape, z, disp, slab);
            },
        );
        Ok(LabelMap::new(labels.geometry().clone(), out)?)
    }
}

/// Source labels narrowed to the smallest integer type that holds them; the
/// pullback reads scattered voxels, so a smaller footprint stays in cache.
enum Compact<'a> {
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(&'a [u32]),
}

impl<'a> Compact<'a> {
    fn new(src: &'a [u32]) -> Self {
        match src.iter().copied().max().unwrap_or(0) {
            m if m <= u8::MAX as u32 => Compact::U8(src.iter().map(|&v| v as u8).collect()),
            m if m <= u16::MAX as u32 => Compact::U16(src.iter().map(|&v| v as u16).collect()),
            _ => Compact::U32(src),
        }
    }

    fn pull_slab(&self, shape: [usize; 3], z: usize, disp: &[[f32; 3]], slab: &mut [u32]) {
        match self {
            Compact::U8(v) => pull_slab(v, shape, z, disp, slab),
            Compact::U16(v) => pull_slab(v, shape, z, disp, slab),
            Compact::U32(v) => pull_slab(v, shape, z, disp, slab),
        }
    }
}

fn pull_slab<T: Copy + Into<u32>>(src: &[T], shape: [usize; 3], z: usize, disp: &[[f32; 3]], slab: &mut [u32]) {
    for (i, (o, d)) in slab.iter_mut().zip(disp).enumerate() {
        let p = [(i % shape[0]) as f64, (i / shape[0]) as f64, z as f64];
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            // Rounds half up; faster than `f64::round` on baseline x86-64.
            let s = p[a] + d[a] as f64 + 0.5;
            if !(s >= 0.0 && s < shape[a] as f64) {
                inside = false;
                break;
            }
            idx[a] = s as usize;
        }
        if inside {
            *o = src[idx[0] + shape[0] * (idx[1] + shape[1] * idx[2])].into();
        }
    }
}

/// Draws the affine parameters, then the deformation std, then the control
/// values (component-major, x-fastest).
pub fn sample_spatial_transform<R: Rng + ?Sized>(config: &GenerationConfig, rng: &mut R) -> SpatialTransform {
    let rotation_deg = std::array::from_fn(|_| uniform(rng, config.rotation_range));
    let scale = std::array::from_fn(|_| uniform(rng, config.scale_range));
    let shear = std::array::from_fn(|_| uniform(rng, config.shear_range));
    let translation = std::array::from_fn(|_| uniform(rng, config.translation_range));
    let deformation_std = uniform(rng, [0.0, config.deformation_std_max]);
    let grid = config.deformation_grid;
    let n: usize = grid.iter().product();
    let control = std::array::from_fn(|_| {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                deformation_std * z
            })
            .collect()
    });
    SpatialTransform {
        affine: AffineParams {
            rotation_deg,
            scale,
            shear,
            translation,
        },
        deformation_std,
        grid,
        control,
    }
}

/// Nearest-neighbour pullback: output voxel `p` takes the label at
/// `p + field(p)` rounded half up, background when that falls outside the grid.
pub fn warp_labels(labels: &LabelMap, field: &DisplacementField) -> Result<LabelMap, SynthError> {
    warp_labels_with_fill(labels, field, 0)
}

/// [`warp_labels`] with `fill` for samples outside the grid.
pub fn warp_labels_with_fill(labels: &LabelMap, field: &DisplacementField, fill: u32) -> Result<LabelMap, SynthError> {
    let shape = labels.geometry().shape();
    if field.shape != shape {
        return Err(SynthError::ShapeMismatch(format!(
            "field {:?} vs labels {shape:?}",
            field.shape
        )));
    }
    let src = Compact::new(labels.labels());
    let plane = shape[0] * shape[1];
    let mut out = vec![fill; labels.labels().len()];
    out.par_chunks_mut(plane)
        .zip(field.data.par_chunks(plane))
        .enumerate()
        .for_each(|(z, (slab, disp))| src.pull_slab(shape, z, disp, slab));
    Ok(LabelMap::new(labels.geometry().clone(), out)?)
}
