use crate::volume::BinaryMask;

use super::edt::squared_distance_transform;
use super::{check_geometry, MetricError};

/// How the two directed surface-distance sets are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HausdorffMode {
    /// Max of the two directed percentiles.
    #[default]
    MaxDirected,
    /// Percentile of the union of both directed distance sets.
    Pooled,
}

/// Foreground voxels with at least one background or out-of-grid 6-neighbour.
pub fn extract_surface(mask: &BinaryMask) -> BinaryMask {
    let g = mask.geometry();
    let [nx, ny, nz] = g.shape();
    let bits = mask.bits();
    let mut out = vec![false; bits.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !bits[i] {
                    continue;
                }
                out[i] = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || !bits[i - 1]
                    || !bits[i + 1]
                    || !bits[i - nx]
                    || !bits[i + nx]
                    || !bits[i - nx * ny]
                    || !bits[i + nx * ny];
            }
        }
    }
    BinaryMask::new(g.clone(), out).expect("same geometry")
}

/// Distances in mm from each surface voxel of `from` to the nearest surface
/// voxel of `to`. Both surfaces must be non-empty.
fn directed_distances(from: &BinaryMask, to: &BinaryMask) -> Vec<f64> {
    let g = to.geometry();
    let d2 = squared_distance_transform(to.bits(), g.shape(), g.spacing());
    from.bits()
        .iter()
        .zip(&d2)
        .filter(|(&b, _)| b)
        .map(|(_, &d)| d.sqrt())
        .collect()
}

/// Linear-interpolation percentile, `q` in [0, 100]. Sorts `values`.
pub fn percentile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(values[lo] + (values[hi] - values[lo]) * (pos - lo as f64))
}

/// q-th percentile surface distance in mm. `None` if either mask is empty.
pub fn surface_distance_percentile(
    a: &BinaryMask,
    b: &BinaryMask,
    q: f64,
    mode: HausdorffMode,
) -> Result<Option<f64>, MetricError> {
    check_geometry(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    let sa = extract_surface(a);
    let sb = extract_surface(b);
    let mut ab = directed_distances(&sa, &sb);
    let mut ba = directed_distances(&sb, &sa);
    Ok(match mode {
        HausdorffMode::MaxDirected => {
            let pa = percentile(&mut ab, q).expect("non-empty surface");
            let pb = percentile(&mut ba, q).expect("non-empty surface");
            Some(pa.max(pb))
        }
        HausdorffMode::Pooled => {
            ab.append(&mut ba);
            percentile(&mut ab, q)
        }
    })
}

/// 95th-percentile Hausdorff distance in mm.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<Option<f64>, MetricError> {
    surface_distance_percentile(a, b, 95.0, HausdorffMode::MaxDirected)
}

/// Maximum symmetric surface distance in mm.
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask) -> Result<Option<f64>, MetricError> {
    surface_distance_percentile(a, b, 100.0, HausdorffMode::MaxDirected)
}
