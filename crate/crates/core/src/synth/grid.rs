//! Trilinear upsampling of coarse control grids to full volume resolution.
//!
//! Control point `i` of a `g`-point axis sits at voxel coordinate
//! `i * (n - 1) / (g - 1)`, so the first and last control points land on the
//! first and last voxel centres. A single control point gives a constant.

/// Per output coordinate: lower control index and weight of the upper one.
fn axis_weights(g: usize, n: usize) -> Vec<(usize, f64)> {
    if g == 1 || n == 1 {
        return vec![(0, 0.0); n];
    }
    let step = (n - 1) as f64 / (g - 1) as f64;
    (0..n)
        .map(|i| {
            let u = i as f64 / step;
            let lo = (u.floor() as usize).min(g - 2);
            (lo, u - lo as f64)
        })
        .collect()
}

fn lerp_axis(src: &[f64], dims: [usize; 3], axis: usize, n: usize) -> (Vec<f64>, [usize; 3]) {
    let g = dims[axis];
    let mut out_dims = dims;
    out_dims[axis] = n;
    let weights = axis_weights(g, n);
    let stride: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; stride * n * outer];
    for o in 0..outer {
        for (i, &(lo, w)) in weights.iter().enumerate() {
            let dst = (o * n + i) * stride;
            let a = (o * g + lo) * stride;
            if g == 1 {
                out[dst..dst + stride].copy_from_slice(&src[a..a + stride]);
                continue;
            }
            let b = a + stride;
            for s in 0..stride {
                out[dst + s] = src[a + s] + w * (src[b + s] - src[a + s]);
            }
        }
    }
    (out, out_dims)
}

/// Upsamples `control` (x-fastest, `grid` points per axis) to `shape`.
pub fn upsample(control: &[f64], grid: [usize; 3], shape: [usize; 3]) -> Vec<f64> {
    debug_assert_eq!(control.len(), grid.iter().product::<usize>());
    let (a, d) = lerp_axis(control, grid, 0, shape[0]);
    let (b, d) = lerp_axis(&a, d, 1, shape[1]);
    drop(a);
    let (c, _) = lerp_axis(&b, d, 2, shape[2]);
    c
}

/// Upsamples one z-slab at a time, for callers that cannot hold the dense
/// volume. Interpolates z first, then y, then x.
pub(crate) struct SlabUpsampler {
    grid: [usize; 3],
    shape: [usize; 3],
    weights: [Vec<(usize, f64)>; 3],
}

impl SlabUpsampler {
    pub(crate) fn new(grid: [usize; 3], shape: [usize; 3]) -> Self {
        Self {
            grid,
            shape,
            weights: std::array::from_fn(|a| axis_weights(grid[a], shape[a])),
        }
    }

    /// Fills `out` (`shape[0] * shape[1]` values, x-fastest) with slab `z`.
    pub(crate) fn slab(&self, control: &[f64], z: usize, out: &mut [f64]) {
        let [gx, gy, gz] = self.grid;
        let [nx, ny, _] = self.shape;
        let lerp = |src: &[f64], g: usize, lo: usize, w: f64, stride: usize, i: usize| {
            let a = src[lo * stride + i];
            if g == 1 {
                a
            } else {
                a + w * (src[(lo + 1) * stride + i] - a)
            }
        };
        let (lz, wz) = self.weights[2][z];
        let plane: Vec<f64> = (0..gx * gy).map(|i| lerp(control, gz, lz, wz, gx * gy, i)).collect();
        let mut row = vec![0.0; gx];
        for y in 0..ny {
            let (ly, wy) = self.weights[1][y];
            for (i, r) in row.iter_mut().enumerate() {
                *r = lerp(&plane, gy, ly, wy, gx, i);
            }
            for (x, o) in out[y * nx..(y + 1) * nx].iter_mut().enumerate() {
                let (lx, wx) = self.weights[0][x];
                *o = lerp(&row, gx, lx, wx, 1, 0);
            }
        }
    }
}

/// Voxel distance between neighbouring control points along each axis
/// (infinite when the axis has a single control point).
pub fn control_spacing(grid: [usize; 3], shape: [usize; 3]) -> [f64; 3] {
    std::array::from_fn(|a| {
        if grid[a] < 2 || shape[a] < 2 {
            f64::INFINITY
        } else {
            (shape[a] - 1) as f64 / (grid[a] - 1) as f64
        }
    })
}
