use super::{Geometry, LabelMap, ScalarVolume, VolumeError};

/// Per-axis offset of output voxel 0 within the input grid for a centred
/// crop/pad. Positive means cropping (voxels dropped from the low side),
/// negative means padding. On odd differences the extra voxel is dropped
/// from, or added to, the high side.
pub fn crop_pad_offsets(input: [usize; 3], target: [usize; 3]) -> [isize; 3] {
    let mut offset = [0isize; 3];
    for axis in 0..3 {
        let diff = input[axis] as isize - target[axis] as isize;
        offset[axis] = if diff >= 0 { diff / 2 } else { -((-diff) / 2) };
    }
    offset
}

fn crop_pad<T: Copy>(
    geometry: &Geometry,
    values: &[T],
    target: [usize; 3],
    fill: T,
) -> Result<(Geometry, Vec<T>), VolumeError> {
    if target.contains(&0) {
        return Err(VolumeError::InvalidGeometry(format!(
            "target shape components must be >= 1, got {target:?}"
        )));
    }
    let input = geometry.shape();
    let offset = crop_pad_offsets(input, target);
    let out_geometry = geometry.shifted(target, offset.map(|o| o as f64))?;
    if input == target {
        return Ok((out_geometry, values.to_vec()));
    }

    let mut out = vec![fill; out_geometry.len()];
    // Overlap of the output grid with the input grid, in output coordinates.
    let range = |axis: usize| {
        let lo = (-offset[axis]).max(0) as usize;
        let hi = ((input[axis] as isize - offset[axis]).min(target[axis] as isize)).max(lo as isize) as usize;
        lo..hi
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    for z in rz {
        let sz = (z as isize + offset[2]) as usize;
        for y in ry.clone() {
            let sy = (y as isize + offset[1]) as usize;
            let sx0 = (rx.start as isize + offset[0]) as usize;
            let src = geometry.index(sx0, sy, sz);
            let dst = out_geometry.index(rx.start, y, z);
            let len = rx.len();
            out[dst..dst + len].copy_from_slice(&values[src..src + len]);
        }
    }
    Ok((out_geometry, out))
}

/// Centre-crops or zero-pads `labels` to `target` voxels per axis.
///
/// Spacing is unchanged and the affine is translated so retained voxels keep
/// their world positions.
pub fn center_crop_pad(labels: &LabelMap, target: [usize; 3]) -> Result<LabelMap, VolumeError> {
    let (geometry, values) = crop_pad(labels.geometry(), labels.labels(), target, 0)?;
    LabelMap::new(geometry, values)
}

/// Same as [`center_crop_pad`] for intensities, padding with `fill`.
pub fn center_crop_pad_scalar(
    volume: &ScalarVolume,
    target: [usize; 3],
    fill: f64,
) -> Result<ScalarVolume, VolumeError> {
    let (geometry, values) = crop_pad(volume.geometry(), volume.values(), target, fill)?;
    ScalarVolume::new(geometry, values)
}
