//! 26-connected component labelling with union-find.

use crate::volume::BrainMask;

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// Keeps the smaller root so every root is the first voxel of its set in
    /// scan order.
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Connected components of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    /// Component id per voxel, 0 outside the mask. Ids start at 1 and are
    /// ordered by the scan-order position of each component's first voxel.
    pub ids: Vec<u32>,
    /// `sizes[id - 1]` is the voxel count of component `id`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Id of the largest component; equal sizes resolve to the lowest id.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, i as u32 + 1));
            }
        }
        best.map(|(_, id)| id)
    }
}

pub fn connected_components(mask: &BrainMask) -> Components {
    let [nx, ny, nz] = mask.dims();
    let data = mask.data();
    let n = data.len();
    assert!(n < u32::MAX as usize, "grid too large for 32-bit component ids");
    let mut uf = UnionFind {
        parent: (0..n as u32).collect(),
    };

    // The 13 neighbours that precede a voxel in scan order.
    let mut back = Vec::with_capacity(13);
    for dz in -1i64..=0 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dz < 0 || dy < 0 || (dy == 0 && dx < 0) {
                    back.push((dx, dy, dz));
                }
            }
        }
    }

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !data[idx] {
                    continue;
                }
                for &(dx, dy, dz) in &back {
                    let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                    if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 {
                        continue;
                    }
                    let nidx = x as usize + nx * (y as usize + ny * z as usize);
                    if data[nidx] {
                        uf.union(idx as u32, nidx as u32);
                    }
                }
            }
        }
    }

    let mut root_id = vec![0u32; n];
    let mut ids = vec![0u32; n];
    let mut sizes = Vec::new();
    for idx in 0..n {
        if !data[idx] {
            continue;
        }
        let r = uf.find(idx as u32) as usize;
        if root_id[r] == 0 {
            sizes.push(0);
            root_id[r] = sizes.len() as u32;
        }
        let id = root_id[r];
        ids[idx] = id;
        sizes[id as usize - 1] += 1;
    }
    Components { ids, sizes }
}
