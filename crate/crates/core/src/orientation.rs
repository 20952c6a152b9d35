//! Anatomical axis codes and lossless axis-permuting reorientation.
//!
//! World space is RAS+: world x grows toward Right, y toward Anterior,
//! z toward Superior. A code such as `LIA` names, for each voxel axis, the
//! anatomical direction that axis grows toward.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::{Affine, Geometry, Volume, Voxel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    L,
    R,
    P,
    A,
    I,
    S,
}

impl Direction {
    /// World axis (0 = x, 1 = y, 2 = z) this direction lies along.
    pub fn world_axis(self) -> usize {
        match self {
            Direction::L | Direction::R => 0,
            Direction::P | Direction::A => 1,
            Direction::I | Direction::S => 2,
        }
    }

    /// +1 when pointing along the positive RAS world axis.
    pub fn sign(self) -> f64 {
        match self {
            Direction::R | Direction::A | Direction::S => 1.0,
            _ => -1.0,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::L => Direction::R,
            Direction::R => Direction::L,
            Direction::P => Direction::A,
            Direction::A => Direction::P,
            Direction::I => Direction::S,
            Direction::S => Direction::I,
        }
    }

    fn from_axis(world_axis: usize, positive: bool) -> Direction {
        match (world_axis, positive) {
            (0, true) => Direction::R,
            (0, false) => Direction::L,
            (1, true) => Direction::A,
            (1, false) => Direction::P,
            (2, true) => Direction::S,
            _ => Direction::I,
        }
    }

    fn letter(self) -> char {
        match self {
            Direction::L => 'L',
            Direction::R => 'R',
            Direction::P => 'P',
            Direction::A => 'A',
            Direction::I => 'I',
            Direction::S => 'S',
        }
    }
}

/// One anatomical direction per voxel axis; each anatomical pair used once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OrientationCode([Direction; 3]);

impl OrientationCode {
    pub const RAS: OrientationCode = OrientationCode([Direction::R, Direction::A, Direction::S]);
    pub const LIA: OrientationCode = OrientationCode([Direction::L, Direction::I, Direction::A]);
    pub const LPS: OrientationCode = OrientationCode([Direction::L, Direction::P, Direction::S]);

    pub fn new(dirs: [Direction; 3]) -> Result<Self> {
        let mut used = [false; 3];
        for d in dirs {
            if std::mem::replace(&mut used[d.world_axis()], true) {
                return Err(Error::InvalidOrientation(dirs.iter().map(|d| d.letter()).collect()));
            }
        }
        Ok(Self(dirs))
    }

    pub fn directions(&self) -> [Direction; 3] {
        self.0
    }

    /// Nearest axis code of an affine. The boolean is true when the
    /// direction cosines were not axis-aligned and had to be snapped.
    pub fn from_affine(affine: &Affine) -> (OrientationCode, bool) {
        // Greedy assignment on the normalized direction cosines: repeatedly
        // take the largest remaining |cosine| so the result is a permutation.
        let mut cos = [[0.0f64; 3]; 3];
        for c in 0..3 {
            let norm = (0..3).map(|r| affine[r][c] * affine[r][c]).sum::<f64>().sqrt();
            for r in 0..3 {
                cos[r][c] = if norm > 0.0 { affine[r][c] / norm } else { 0.0 };
            }
        }
        let mut dirs = [Direction::R; 3];
        let mut row_used = [false; 3];
        let mut col_used = [false; 3];
        let mut oblique = false;
        for _ in 0..3 {
            let mut best = (0usize, 0usize, -1.0f64);
            for r in (0..3).filter(|&r| !row_used[r]) {
                for c in (0..3).filter(|&c| !col_used[c]) {
                    if cos[r][c].abs() > best.2 {
                        best = (r, c, cos[r][c].abs());
                    }
                }
            }
            let (r, c, mag) = best;
            if (mag - 1.0).abs() > 1e-6 {
                oblique = true;
            }
            row_used[r] = true;
            col_used[c] = true;
            dirs[c] = Direction::from_axis(r, cos[r][c] >= 0.0);
        }
        (OrientationCode(dirs), oblique)
    }
}

impl fmt::Display for OrientationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromStr for OrientationCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<char> = s.trim().chars().collect();
        if letters.len() != 3 {
            return Err(Error::InvalidOrientation(s.to_string()));
        }
        let mut dirs = [Direction::R; 3];
        for (slot, ch) in dirs.iter_mut().zip(&letters) {
            *slot = match ch.to_ascii_uppercase() {
                'L' => Direction::L,
                'R' => Direction::R,
                'P' => Direction::P,
                'A' => Direction::A,
                'I' => Direction::I,
                'S' => Direction::S,
                _ => return Err(Error::InvalidOrientation(s.to_string())),
            };
        }
        OrientationCode::new(dirs)
    }
}

/// For each target axis: the source axis it reads from, and whether it is flipped.
fn axis_mapping(from: OrientationCode, to: OrientationCode) -> [(usize, bool); 3] {
    let mut map = [(0, false); 3];
    for (t, tdir) in to.0.iter().enumerate() {
        let s = from
            .0
            .iter()
            .position(|d| d.world_axis() == tdir.world_axis())
            .expect("orientation codes are permutations");
        map[t] = (s, from.0[s] != *tdir);
    }
    map
}

/// Permutes and flips voxel axes so the volume's orientation becomes `target`.
/// No interpolation happens; every voxel keeps its world position.
pub fn reorient<T: Voxel>(vol: &Volume<T>, target: OrientationCode) -> Result<Volume<T>> {
    let geom = vol.geometry();
    let (current, oblique) = OrientationCode::from_affine(geom.affine());
    if oblique {
        log::warn!("oblique affine snapped to nearest axis code {current}");
    }
    if current == target {
        return Ok(vol.clone());
    }
    let map = axis_mapping(current, target);
    let src_dims = geom.dims();
    let dims = [src_dims[map[0].0], src_dims[map[1].0], src_dims[map[2].0]];

    // new voxel index -> old voxel index, as a 4x4 matrix T; new affine = A * T
    let mut t = [[0.0f64; 4]; 4];
    t[3][3] = 1.0;
    for (new_axis, &(old_axis, flip)) in map.iter().enumerate() {
        if flip {
            t[old_axis][new_axis] = -1.0;
            t[old_axis][3] = (src_dims[old_axis] - 1) as f64;
        } else {
            t[old_axis][new_axis] = 1.0;
        }
    }
    let a = geom.affine();
    let mut affine = [[0.0f64; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            affine[r][c] = (0..4).map(|m| a[r][m] * t[m][c]).sum();
        }
    }
    let new_geom = Geometry::new(dims, affine)?;

    let src = vol.data();
    let mut data = Vec::with_capacity(src.len());
    let mut old = [0usize; 3];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                for (new_axis, &n) in [i, j, k].iter().enumerate() {
                    let (old_axis, flip) = map[new_axis];
                    old[old_axis] = if flip { src_dims[old_axis] - 1 - n } else { n };
                }
                data.push(src[geom.index(old[0], old[1], old[2])]);
            }
        }
    }
    Volume::new(new_geom, data)
}
