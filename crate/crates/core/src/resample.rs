//! Resolution conversion: separable cubic-spline resampling of intensity
//! images and one-hot trilinear resampling of label maps.
//!
//! The output grid covers the same world extent as the input. With
//! `n_out = round(n_in * s_in / s_target)` voxels per axis the output
//! spacing is `n_in * s_in / n_out`, and output voxel centre `i` samples the
//! input at continuous index `(i + 0.5) * n_in / n_out - 0.5`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelVolume, ScalarVolume, MAX_LABEL};

/// Working resolution of the segmentation network (mm).
pub const DEFAULT_TARGET_SPACING: f64 = 0.7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSpec {
    pub target_spacing: [f64; 3],
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            target_spacing: [DEFAULT_TARGET_SPACING; 3],
        }
    }
}

impl ResampleSpec {
    pub fn isotropic(mm: f64) -> Self {
        Self {
            target_spacing: [mm; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidSpacing(self.target_spacing));
        }
        Ok(())
    }

    /// Output geometry for resampling `geom` to this spec.
    pub fn output_geometry(&self, geom: &Geometry) -> Result<Geometry> {
        self.validate()?;
        let dims = geom.dims();
        let spacing = geom.spacing();
        let out_dims: [usize; 3] =
            std::array::from_fn(|d| (dims[d] as f64 * spacing[d] / self.target_spacing[d]).round() as usize);
        if out_dims.iter().any(|&n| n < 1) {
            return Err(Error::DegenerateGrid(out_dims));
        }
        let scale: [f64; 3] = std::array::from_fn(|d| dims[d] as f64 / out_dims[d] as f64);
        let a = geom.affine();
        let start: [f64; 3] = std::array::from_fn(|d| 0.5 * scale[d] - 0.5);
        let mut affine = *a;
        for r in 0..3 {
            for c in 0..3 {
                affine[r][c] = a[r][c] * scale[c];
            }
            affine[r][3] = a[r][0] * start[0] + a[r][1] * start[1] + a[r][2] * start[2] + a[r][3];
        }
        Geometry::new(out_dims, affine)
    }
}

/// Continuous input index sampled by each output voxel along one axis.
fn source_positions(n_in: usize, n_out: usize) -> impl Iterator<Item = f64> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out).map(move |i| (i as f64 + 0.5) * scale - 0.5)
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Catmull-Rom weights for fractional offset `t` in `[0, 1)`.
#[inline]
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

struct Taps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f32; 4]>,
}

fn cubic_taps(n_in: usize, n_out: usize) -> Taps {
    let mut index = Vec::with_capacity(n_out);
    let mut weight = Vec::with_capacity(n_out);
    for pos in source_positions(n_in, n_out) {
        let f = pos.floor();
        let base = f as i64;
        let w = catmull_rom_weights(pos - f);
        index.push(std::array::from_fn(|m| clamp_index(base - 1 + m as i64, n_in)));
        weight.push(w.map(|v| v as f32));
    }
    Taps { index, weight }
}

fn separable_pass(src: &[f32], dims: [usize; 3], axis: usize, taps: &Taps) -> (Vec<f32>, [usize; 3]) {
    let mut out_dims = dims;
    out_dims[axis] = taps.index.len();
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let [ox, oy, _] = out_dims;
    let slab = ox * oy;
    let mut out = vec![0f32; out_dims.iter().product()];
    out.par_chunks_mut(slab).enumerate().for_each(|(k, slice)| {
        for (off, o) in slice.iter_mut().enumerate() {
            let mut pos = [off % ox, off / ox, k];
            let p = pos[axis];
            pos[axis] = 0;
            let base = pos[0] + dims[0] * (pos[1] + dims[1] * pos[2]);
            let idx = &taps.index[p];
            let w = &taps.weight[p];
            *o = (0..4).map(|m| w[m] * src[base + idx[m] * stride]).sum();
        }
    });
    (out, out_dims)
}

/// Separable Catmull-Rom resampling with clamped edges.
pub fn resample_image(img: &ScalarVolume, spec: &ResampleSpec) -> Result<ScalarVolume> {
    let out_geom = spec.output_geometry(img.geometry())?;
    let od = out_geom.dims();
    let mut data = img.data().to_vec();
    let mut dims = img.dims();
    for axis in 0..3 {
        if dims[axis] == od[axis] {
            continue; // identical sample positions, weights (0, 1, 0, 0)
        }
        let taps = cubic_taps(dims[axis], od[axis]);
        let (d, nd) = separable_pass(&data, dims, axis, &taps);
        data = d;
        dims = nd;
    }
    ScalarVolume::new(out_geom, data)
}

/// Two-point linear interpolation stencil along one axis.
#[derive(Clone, Copy)]
struct LinearTap {
    lo: usize,
    hi: usize,
    w_hi: f64,
}

fn linear_taps(n_in: usize, n_out: usize) -> Vec<LinearTap> {
    source_positions(n_in, n_out)
        .map(|pos| {
            let f = pos.floor();
            LinearTap {
                lo: clamp_index(f as i64, n_in),
                hi: clamp_index(f as i64 + 1, n_in),
                w_hi: pos - f,
            }
        })
        .collect()
}

const N_LABELS: usize = MAX_LABEL as usize + 1;

/// One-hot trilinear label resampling.
pub struct LabelResampler<'a> {
    labels: &'a LabelVolume,
    out_geom: Geometry,
    taps: [Vec<LinearTap>; 3],
}

impl<'a> LabelResampler<'a> {
    pub fn new(labels: &'a LabelVolume, spec: &ResampleSpec) -> Result<Self> {
        let out_geom = spec.output_geometry(labels.geometry())?;
        let d = labels.dims();
        let od = out_geom.dims();
        let taps = std::array::from_fn(|a| linear_taps(d[a], od[a]));
        Ok(Self { labels, out_geom, taps })
    }

    pub fn output_geometry(&self) -> &Geometry {
        &self.out_geom
    }

    /// Interpolated indicator weight of every label at an output voxel.
    pub fn weights(&self, i: usize, j: usize, k: usize) -> [f64; N_LABELS] {
        let mut w = [0.0f64; N_LABELS];
        let (tx, ty, tz) = (self.taps[0][i], self.taps[1][j], self.taps[2][k]);
        let g = self.labels.geometry();
        let src = self.labels.data();
        for (z, wz) in [(tz.lo, 1.0 - tz.w_hi), (tz.hi, tz.w_hi)] {
            for (y, wy) in [(ty.lo, 1.0 - ty.w_hi), (ty.hi, ty.w_hi)] {
                for (x, wx) in [(tx.lo, 1.0 - tx.w_hi), (tx.hi, tx.w_hi)] {
                    w[src[g.index(x, y, z)] as usize] += wx * wy * wz;
                }
            }
        }
        w
    }

    /// Argmax label at an output voxel; ties go to the lowest label index.
    pub fn label_at(&self, i: usize, j: usize, k: usize) -> u16 {
        let w = self.weights(i, j, k);
        let mut best = 0;
        for l in 1..N_LABELS {
            if w[l] > w[best] {
                best = l;
            }
        }
        best as u16
    }

    pub fn run(&self) -> LabelVolume {
        let [ox, oy, _] = self.out_geom.dims();
        let slab = ox * oy;
        let mut out = vec![0u16; self.out_geom.len()];
        out.par_chunks_mut(slab).enumerate().for_each(|(k, slice)| {
            for (off, o) in slice.iter_mut().enumerate() {
                *o = self.label_at(off % ox, off / ox, k);
            }
        });
        LabelVolume::new(self.out_geom.clone(), out).expect("labels come from the input")
    }
}

pub fn resample_labelmap(labels: &LabelVolume, spec: &ResampleSpec) -> Result<LabelVolume> {
    Ok(LabelResampler::new(labels, spec)?.run())
}
