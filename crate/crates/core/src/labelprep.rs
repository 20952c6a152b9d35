//! Training label-map preparation: brain mask morphology, the extra-cerebral
//! label, and skull-stripping of the matching image.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::EXTRA_CEREBRAL;
use crate::volume::{BrainMask, LabelVolume, ScalarVolume};

/// Spacing (mm) at or below which the finer-grid dilation radius applies.
pub const FINE_SPACING_MM: f64 = 0.7;
pub const FINE_GRID_RADIUS: usize = 5;
pub const COARSE_GRID_RADIUS: usize = 4;

/// Mask of all nonzero labels.
pub fn derive_brain_mask(labels: &LabelVolume) -> Result<BrainMask> {
    let mask = labels.map(|l| l != 0)?;
    if mask.count() == 0 {
        return Err(Error::EmptySegmentation);
    }
    Ok(mask)
}

#[derive(Clone, Copy)]
enum Op {
    Dilate,
    Erode,
}

/// One pass of a 1D window of half-width `radius` along `axis`. Windows are
/// clipped at the grid border, so out-of-grid voxels never contribute.
fn axis_pass(src: &[bool], dims: [usize; 3], axis: usize, radius: usize, op: Op) -> Vec<bool> {
    let [nx, ny, _] = dims;
    let stride = [1, nx, nx * ny][axis];
    let n = dims[axis];
    let slab = nx * ny;
    let mut out = vec![false; src.len()];
    out.par_chunks_mut(slab).enumerate().for_each(|(k, slice)| {
        for (off, o) in slice.iter_mut().enumerate() {
            let idx = k * slab + off;
            let pos = [off % nx, off / nx, k][axis];
            let lo = pos.saturating_sub(radius);
            let hi = (pos + radius).min(n - 1);
            let base = idx - pos * stride;
            let mut window = (lo..=hi).map(|p| src[base + p * stride]);
            *o = match op {
                Op::Dilate => window.any(|v| v),
                Op::Erode => window.all(|v| v),
            };
        }
    });
    out
}

fn cube_filter(mask: &BrainMask, radius: usize, op: Op) -> Vec<bool> {
    if radius == 0 {
        return mask.data().to_vec();
    }
    let dims = mask.dims();
    let mut data = axis_pass(mask.data(), dims, 0, radius, op);
    data = axis_pass(&data, dims, 1, radius, op);
    axis_pass(&data, dims, 2, radius, op)
}

/// Sets every voxel within Chebyshev distance `radius` of a set voxel
/// (`radius` iterations of the 3×3×3 cube element), clipped at the grid.
pub fn dilate(mask: &BrainMask, radius: usize) -> BrainMask {
    mask.with_data(cube_filter(mask, radius, Op::Dilate))
        .expect("same geometry")
}

/// Closing with the 3×3×3 cube, one iteration. Computed on a grid padded
/// by one voxel, so it equals closing on an unbounded background: it never
/// removes input voxels and the grid border does not act as foreground.
pub fn binary_closing(mask: &BrainMask) -> BrainMask {
    let [nx, ny, nz] = mask.dims();
    let pdims = [nx + 2, ny + 2, nz + 2];
    let pidx = |i: usize, j: usize, k: usize| i + pdims[0] * (j + pdims[1] * k);
    let mut padded = vec![false; pdims.iter().product()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                padded[pidx(i + 1, j + 1, k + 1)] = mask.get(i, j, k);
            }
        }
    }
    let mut work = padded;
    for (axis, op) in [
        (0, Op::Dilate),
        (1, Op::Dilate),
        (2, Op::Dilate),
        (0, Op::Erode),
        (1, Op::Erode),
        (2, Op::Erode),
    ] {
        work = axis_pass(&work, pdims, axis, 1, op);
    }
    let data = (0..mask.len())
        .map(|idx| {
            let [i, j, k] = mask.geometry().coords(idx);
            work[pidx(i + 1, j + 1, k + 1)]
        })
        .collect();
    mask.with_data(data).expect("same geometry")
}

/// Dilation radius (voxels) for a label map of the given spacing.
pub fn dilation_radius_for(spacing: [f64; 3]) -> Result<usize> {
    if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
        return Err(Error::InvalidSpacing(spacing));
    }
    let coarsest = spacing.iter().cloned().fold(f64::MIN, f64::max);
    // 1e-6 absorbs f32 header rounding of e.g. 0.7 mm
    Ok(if coarsest <= FINE_SPACING_MM + 1e-6 {
        FINE_GRID_RADIUS
    } else {
        COARSE_GRID_RADIUS
    })
}

/// Assigns the extra-cerebral label to voxels set in `new_mask` but
/// unlabeled in `labels`. Nonzero labels are never modified.
pub fn add_extracerebral_label(labels: &LabelVolume, new_mask: &BrainMask) -> Result<LabelVolume> {
    labels
        .geometry()
        .ensure_same_grid(new_mask.geometry(), "label map and mask")?;
    let data = labels
        .data()
        .iter()
        .zip(new_mask.data())
        .map(|(&l, &m)| if l == 0 && m { EXTRA_CEREBRAL } else { l })
        .collect();
    labels.with_data(data)
}

/// Zeroes the image outside the mask.
pub fn apply_mask(image: &ScalarVolume, mask: &BrainMask) -> Result<ScalarVolume> {
    image.geometry().ensure_same_grid(mask.geometry(), "image and mask")?;
    let data = image
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    image.with_data(data)
}

/// Outputs of [`prepare`].
#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub labels: LabelVolume,
    pub image: Option<ScalarVolume>,
    pub mask: BrainMask,
    pub radius: usize,
}

/// Full preparation: mask, closing, dilation, extra-cerebral label, and
/// masking of the image with the enlarged mask.
pub fn prepare(labels: &LabelVolume, image: Option<&ScalarVolume>, radius: Option<usize>) -> Result<PreparedSubject> {
    let radius = match radius {
        Some(r) => r,
        None => dilation_radius_for(labels.spacing())?,
    };
    let original = derive_brain_mask(labels)?;
    let mask = dilate(&binary_closing(&original), radius);
    let new_labels = add_extracerebral_label(labels, &mask)?;
    let image = image.map(|img| apply_mask(img, &mask)).transpose()?;
    Ok(PreparedSubject {
        labels: new_labels,
        image,
        mask,
        radius,
    })
}
