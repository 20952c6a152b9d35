//! Dense 3D volumes with voxel-to-world geometry.
//!
//! Data is stored x-fastest: the linear index of voxel `(i, j, k)` is
//! `i + nx * (j + ny * k)`, matching the on-disk NIfTI order.

use std::collections::BTreeSet;
use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::orientation::OrientationCode;

/// Largest label index a [`LabelVolume`] may hold (the extra-cerebral label).
pub const MAX_LABEL: u16 = 36;

/// Row-major 4×4 voxel-to-world matrix.
pub type Affine = [[f64; 4]; 4];

pub const IDENTITY_AFFINE: Affine = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Element types that may be stored in a [`Volume`].
pub trait Voxel: Copy + Send + Sync + PartialEq + Default + Debug + 'static {
    fn to_f64(self) -> f64;

    fn is_valid(self) -> bool {
        true
    }
}

impl Voxel for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Voxel for bool {
    fn to_f64(self) -> f64 {
        if self {
            1.0
        } else {
            0.0
        }
    }
}

impl Voxel for u16 {
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn is_valid(self) -> bool {
        self <= MAX_LABEL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
}

impl Geometry {
    /// Builds a geometry from grid dimensions and a voxel-to-world affine.
    /// Spacing is the length of each affine column.
    pub fn new(dims: [usize; 3], affine: Affine) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!("zero-sized dimension in {dims:?}")));
        }
        if affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteAffine);
        }
        let mut spacing = [0.0; 3];
        for (c, s) in spacing.iter_mut().enumerate() {
            *s = (0..3).map(|r| affine[r][c] * affine[r][c]).sum::<f64>().sqrt();
        }
        if spacing.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidSpacing(spacing));
        }
        Ok(Self { dims, spacing, affine })
    }

    /// Axis-aligned geometry in RAS orientation with the origin at voxel 0.
    pub fn from_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::with_orientation(dims, spacing, OrientationCode::RAS)
    }

    /// Axis-aligned geometry whose voxel axes follow `code`.
    pub fn with_orientation(dims: [usize; 3], spacing: [f64; 3], code: OrientationCode) -> Result<Self> {
        if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidSpacing(spacing));
        }
        let mut affine = IDENTITY_AFFINE;
        affine[0][0] = 0.0;
        affine[1][1] = 0.0;
        affine[2][2] = 0.0;
        for (axis, dir) in code.directions().iter().enumerate() {
            affine[dir.world_axis()][axis] = dir.sign() * spacing[axis];
        }
        Self::new(dims, affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Axis codes of the voxel axes, snapped to the nearest anatomical axis.
    pub fn orientation(&self) -> OrientationCode {
        OrientationCode::from_affine(&self.affine).0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// World position (mm) of a continuous voxel index.
    pub fn voxel_to_world(&self, ijk: [f64; 3]) -> [f64; 3] {
        let a = &self.affine;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = a[r][0] * ijk[0] + a[r][1] * ijk[1] + a[r][2] * ijk[2] + a[r][3];
        }
        out
    }

    /// Same dims and affines agreeing to 1e-4 (f32 header precision).
    pub fn same_grid(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .flatten()
                .zip(other.affine.iter().flatten())
                .all(|(a, b)| (a - b).abs() <= 1e-4 * (1.0 + a.abs().max(b.abs())))
    }

    pub(crate) fn ensure_same_grid(&self, other: &Geometry, what: &'static str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(what))
        }
    }
}

/// An immutable dense 3D grid of voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    geom: Geometry,
    data: Vec<T>,
}

pub type ScalarVolume = Volume<f32>;
pub type LabelVolume = Volume<u16>;
pub type BrainMask = Volume<bool>;

impl<T: Voxel> Volume<T> {
    pub fn new(geom: Geometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidGeometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geom.dims()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_valid()) {
            return Err(Error::LabelOutOfRange(bad.to_f64()));
        }
        Ok(Self { geom, data })
    }

    pub fn filled(geom: Geometry, value: T) -> Result<Self> {
        let n = geom.len();
        Self::new(geom, vec![value; n])
    }

    pub fn from_fn(geom: Geometry, f: impl Fn([usize; 3]) -> T) -> Result<Self> {
        let data = (0..geom.len()).map(|idx| f(geom.coords(idx))).collect();
        Self::new(geom, data)
    }

    /// Builds a volume sharing this volume's geometry.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<Volume<U>> {
        Volume::new(self.geom.clone(), data)
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Result<Volume<U>> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn orientation(&self) -> OrientationCode {
        self.geom.orientation()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.geom.index(i, j, k)]
    }
}

impl Volume<u16> {
    /// Label indices present in the volume.
    pub fn label_domain(&self) -> BTreeSet<u16> {
        let mut seen = [false; MAX_LABEL as usize + 1];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        (0..=MAX_LABEL).filter(|&l| seen[l as usize]).collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    /// Indicator mask of one label.
    pub fn mask_of(&self, label: u16) -> BrainMask {
        Volume {
            geom: self.geom.clone(),
            data: self.data.iter().map(|&v| v == label).collect(),
        }
    }
}

impl Volume<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_coords_roundtrip() {
        let g = Geometry::from_spacing([3, 4, 5], [1.0, 1.0, 1.0]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
    }

    #[test]
    fn spacing_from_affine_columns() {
        let g = Geometry::with_orientation([2, 2, 2], [0.7, 0.8, 0.9], OrientationCode::LIA).unwrap();
        let s = g.spacing();
        assert!((s[0] - 0.7).abs() < 1e-12 && (s[1] - 0.8).abs() < 1e-12 && (s[2] - 0.9).abs() < 1e-12);
        assert_eq!(g.orientation(), OrientationCode::LIA);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Geometry::from_spacing([0, 1, 1], [1.0; 3]).is_err());
        assert!(Geometry::from_spacing([1, 1, 1], [1.0, -1.0, 1.0]).is_err());
        let mut a = IDENTITY_AFFINE;
        a[0][3] = f64::NAN;
        assert!(matches!(Geometry::new([1, 1, 1], a), Err(Error::NonFiniteAffine)));
    }

    #[test]
    fn label_volume_rejects_out_of_range() {
        let g = Geometry::from_spacing([2, 1, 1], [1.0; 3]).unwrap();
        assert!(LabelVolume::new(g.clone(), vec![0, 37]).is_err());
        let v = LabelVolume::new(g, vec![36, 2]).unwrap();
        assert_eq!(v.label_domain().into_iter().collect::<Vec<_>>(), vec![2, 36]);
    }

    #[test]
    fn data_length_checked() {
        let g = Geometry::from_spacing([2, 2, 2], [1.0; 3]).unwrap();
        assert!(ScalarVolume::new(g, vec![0.0; 7]).is_err());
    }
}
