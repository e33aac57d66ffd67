//! Exact Euclidean distance transform on anisotropic grids.
//!
//! Separable lower-envelope-of-parabolas method: one linear pass per axis
//! over squared distances, with each axis' spacing folded into the parabola
//! width so the result is in mm² directly.

use crate::volume::{BinaryMask, ScalarVolume};

use super::MetricError;

/// Distance in mm from every voxel centre to the nearest foreground voxel
/// centre. Foreground voxels are 0.
pub fn distance_transform(mask: &BinaryMask) -> Result<ScalarVolume, MetricError> {
    if mask.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    let mut d2 = squared_distance_transform(mask.bits(), mask.geometry().shape(), mask.geometry().spacing());
    d2.iter_mut().for_each(|v| *v = v.sqrt());
    Ok(ScalarVolume::from_parts_unchecked(mask.geometry().clone(), d2))
}

/// Squared mm distances; `f64::INFINITY` everywhere when `bits` has no
/// foreground.
pub(crate) fn squared_distance_transform(bits: &[bool], shape: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = shape;
    let mut d: Vec<f64> = bits.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];

    // x: contiguous rows.
    let s2 = spacing[0] * spacing[0];
    for row in d.chunks_exact_mut(nx) {
        line[..nx].copy_from_slice(row);
        envelope(&line[..nx], s2, &mut out[..nx], &mut v, &mut z);
        row.copy_from_slice(&out[..nx]);
    }

    // y: stride nx within each z slice.
    let s2 = spacing[1] * spacing[1];
    for zi in 0..nz {
        let base = zi * nx * ny;
        for xi in 0..nx {
            for yi in 0..ny {
                line[yi] = d[base + xi + yi * nx];
            }
            envelope(&line[..ny], s2, &mut out[..ny], &mut v, &mut z);
            for yi in 0..ny {
                d[base + xi + yi * nx] = out[yi];
            }
        }
    }

    // z: stride nx * ny.
    let s2 = spacing[2] * spacing[2];
    let plane = nx * ny;
    for i in 0..plane {
        for zi in 0..nz {
            line[zi] = d[i + zi * plane];
        }
        envelope(&line[..nz], s2, &mut out[..nz], &mut v, &mut z);
        for zi in 0..nz {
            d[i + zi * plane] = out[zi];
        }
    }
    d
}

/// `out[p] = min_q s2 * (p - q)^2 + f[q]` over finite `f[q]`.
fn envelope(f: &[f64], s2: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        let fq = f[q];
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        let mut s;
        loop {
            let r = v[k];
            let rf = r as f64;
            s = ((fq + s2 * qf * qf) - (f[r] + s2 * rf * rf)) / (2.0 * s2 * (qf - rf));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        if s <= z[k] {
            // k == 0 and the new parabola dominates the first one everywhere.
            v[0] = q;
            z[1] = f64::INFINITY;
            continue;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while z[k + 1] < pf {
            k += 1;
        }
        let dq = pf - v[k] as f64;
        *o = s2 * dq * dq + f[v[k]];
    }
}
