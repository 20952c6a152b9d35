//! Smooth random fields: the nonlinear displacement and the bias field,
//! both drawn on a coarse control grid and trilinearly upsampled.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::affine::{uniform, AffineSample};
use super::config::GenerativeConfig;
use crate::volume::{Geometry, LabelVolume};

/// Control points per axis of the displacement field.
pub const NONLIN_CONTROL_POINTS: usize = 10;
/// Control points per axis of the bias field.
pub const BIAS_CONTROL_POINTS: usize = 4;

fn control_dims(dims: [usize; 3], points: usize) -> [usize; 3] {
    dims.map(|n| n.min(points).max(1))
}

/// Linear interpolation weights mapping `n_out` samples onto `n_in`
/// control points with both end points aligned.
fn line_weights(n_in: usize, n_out: usize) -> Vec<(usize, f32)> {
    (0..n_out)
        .map(|i| {
            if n_in == 1 || n_out == 1 {
                return (0, 0.0);
            }
            let t = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let lo = (t.floor() as usize).min(n_in - 2);
            (lo, (t - lo as f64) as f32)
        })
        .collect()
}

fn interp_axis(src: &[f32], dims: [usize; 3], axis: usize, n_out: usize) -> (Vec<f32>, [usize; 3]) {
    let mut out_dims = dims;
    out_dims[axis] = n_out;
    let weights = line_weights(dims[axis], n_out);
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let [ox, oy, _] = out_dims;
    let slab = ox * oy;
    let mut out = vec![0.0f32; out_dims.iter().product()];
    out.par_chunks_mut(slab).enumerate().for_each(|(k, slice)| {
        for (off, o) in slice.iter_mut().enumerate() {
            let mut pos = [off % ox, off / ox, k];
            let (lo, w) = weights[pos[axis]];
            pos[axis] = lo;
            let base = pos[0] + dims[0] * (pos[1] + dims[1] * pos[2]);
            *o = if w == 0.0 {
                src[base]
            } else {
                src[base] * (1.0 - w) + src[base + stride] * w
            };
        }
    });
    (out, out_dims)
}

/// Separable trilinear upsampling of a control grid to `dims`, corners aligned.
pub fn upsample_linear(control: &[f32], control_dims: [usize; 3], dims: [usize; 3]) -> Vec<f32> {
    assert_eq!(control.len(), control_dims.iter().product::<usize>());
    let (a, d) = interp_axis(control, control_dims, 0, dims[0]);
    let (b, d) = interp_axis(&a, d, 1, dims[1]);
    interp_axis(&b, d, 2, dims[2]).0
}

/// Per-voxel displacement (mm) along each voxel axis.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    dims: [usize; 3],
    control_dims: [usize; 3],
    components: [Vec<f32>; 3],
}

impl DeformationField {
    pub fn zeros(dims: [usize; 3]) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            control_dims: [1; 3],
            components: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    /// Upsamples three control grids (one per axis) to `dims`.
    pub fn from_control(control: [Vec<f32>; 3], control_dims: [usize; 3], dims: [usize; 3]) -> Self {
        let components = control.map(|c| upsample_linear(&c, control_dims, dims));
        Self {
            dims,
            control_dims,
            components,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn control_dims(&self) -> [usize; 3] {
        self.control_dims
    }

    pub fn component(&self, axis: usize) -> &[f32] {
        &self.components[axis]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [
            self.components[0][idx] as f64,
            self.components[1][idx] as f64,
            self.components[2][idx] as f64,
        ]
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.dims.iter().product())
            .map(|i| {
                let d = self.at(i);
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }
}

/// Draws a smooth displacement field: per-axis std uniform in
/// `[0, b_nonlin]`, Gaussian control values at that std, trilinear upsampling.
pub fn sample_nonlinear_field<R: Rng + ?Sized>(
    cfg: &GenerativeConfig,
    rng: &mut R,
    geom: &Geometry,
) -> DeformationField {
    let dims = geom.dims();
    if cfg.b_nonlin == 0.0 {
        return DeformationField::zeros(dims);
    }
    let cdims = control_dims(dims, NONLIN_CONTROL_POINTS);
    let n: usize = cdims.iter().product();
    let control = [0, 1, 2].map(|_| {
        let std = uniform(rng, 0.0, cfg.b_nonlin);
        (0..n)
            .map(|_| (std * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect::<Vec<f32>>()
    });
    DeformationField::from_control(control, cdims, dims)
}

/// Backward warp with nearest-neighbour sampling. Output voxel `x` (in
/// centred mm coordinates) reads the input at `M · (x + u(x))`; sources
/// outside the grid read background.
pub fn deform_labelmap(labels: &LabelVolume, aff: &AffineSample, field: &DeformationField) -> LabelVolume {
    let geom = labels.geometry();
    let dims = geom.dims();
    assert_eq!(field.dims(), dims, "deformation field must match the label grid");
    let spacing = geom.spacing();
    let center = dims.map(|n| (n as f64 - 1.0) / 2.0);
    let m = aff.matrix();
    let src = labels.data();
    let [nx, ny, _] = dims;
    let slab = nx * ny;
    let mut out = vec![0u16; src.len()];
    out.par_chunks_mut(slab).enumerate().for_each(|(k, slice)| {
        for (off, o) in slice.iter_mut().enumerate() {
            let idx = k * slab + off;
            let ijk = [off % nx, off / nx, k];
            let u = field.at(idx);
            let p: [f64; 3] = std::array::from_fn(|d| (ijk[d] as f64 - center[d]) * spacing[d] + u[d]);
            let mut vox = [0usize; 3];
            let mut inside = true;
            for d in 0..3 {
                let q = m[d][0] * p[0] + m[d][1] * p[1] + m[d][2] * p[2] + m[d][3];
                let v = (q / spacing[d] + center[d] + 0.5).floor();
                if v < 0.0 || v >= dims[d] as f64 {
                    inside = false;
                    break;
                }
                vox[d] = v as usize;
            }
            *o = if inside {
                src[geom.index(vox[0], vox[1], vox[2])]
            } else {
                0
            };
        }
    });
    labels.with_data(out).expect("labels stay in range")
}

/// A log-domain bias field on a coarse control grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasControl {
    pub control_dims: [usize; 3],
    pub values: Vec<f32>,
}

impl BiasControl {
    pub fn constant(value: f32) -> Self {
        Self {
            control_dims: [1, 1, 1],
            values: vec![value],
        }
    }

    /// Std uniform in `[0, b_B]`, Gaussian control values at that std.
    pub fn sample<R: Rng + ?Sized>(cfg: &GenerativeConfig, rng: &mut R, dims: [usize; 3]) -> (Self, f64) {
        let control_dims = control_dims(dims, BIAS_CONTROL_POINTS);
        let std = uniform(rng, 0.0, cfg.b_bias);
        let n: usize = control_dims.iter().product();
        let values = (0..n)
            .map(|_| (std * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect();
        (Self { control_dims, values }, std)
    }

    /// Multiplicative field `exp(upsampled log field)` on `dims`.
    pub fn multiplier(&self, dims: [usize; 3]) -> Vec<f32> {
        let mut f = upsample_linear(&self.values, self.control_dims, dims);
        f.par_iter_mut().for_each(|v| *v = v.exp());
        f
    }
}
