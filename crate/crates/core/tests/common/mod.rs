//! Fixtures and brute-force reference implementations shared by the
//! integration tests. Nothing here calls the code under test.

#![allow(dead_code)]

use brainsynth::{Geometry, LabelVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn grid(dims: [usize; 3], spacing: [f64; 3]) -> Geometry {
    Geometry::from_spacing(dims, spacing).unwrap()
}

/// Sphere split into 35 labelled sectors and shells, on an `n³` grid.
pub fn brain_phantom(n: usize) -> LabelVolume {
    let c = (n as f64 - 1.0) / 2.0;
    let r_max = 0.4 * n as f64;
    LabelVolume::from_fn(grid([n; 3], [1.0; 3]), move |[i, j, k]| {
        let d = [i as f64 - c, j as f64 - c, k as f64 - c];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if r > r_max {
            return 0;
        }
        let shell = ((r / r_max) * 5.0).min(4.0) as u16; // 0..=4
        let az = (d[1].atan2(d[0]) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        let sector = ((az * 7.0) as u16).min(6); // 0..=6
        1 + shell * 7 + sector // 1..=35
    })
    .unwrap()
}

/// Random label map with values in `0..n_labels`, blocky so segments have
/// both interior and boundary voxels.
pub fn random_labels(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: [f64; 3], n_labels: u16) -> LabelVolume {
    let block = rng.random_range(1..=3usize);
    let bd = dims.map(|d| d.div_ceil(block));
    let blocks: Vec<u16> = (0..bd.iter().product::<usize>())
        .map(|_| rng.random_range(0..n_labels))
        .collect();
    let flip = rng.random_range(0.0..0.15);
    let noise: Vec<Option<u16>> = (0..dims.iter().product::<usize>())
        .map(|_| (rng.random::<f64>() < flip).then(|| rng.random_range(0..n_labels)))
        .collect();
    LabelVolume::from_fn(grid(dims, spacing), |[i, j, k]| {
        let idx = i + dims[0] * (j + dims[1] * k);
        noise[idx].unwrap_or(blocks[i / block + bd[0] * (j / block + bd[1] * (k / block))])
    })
    .unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dice by counting.
pub fn brute_dsc(g: &[bool], p: &[bool]) -> f64 {
    let inter = g.iter().zip(p).filter(|(a, b)| **a && **b).count();
    let n = g.iter().filter(|x| **x).count() + p.iter().filter(|x| **x).count();
    if n == 0 {
        1.0
    } else {
        2.0 * inter as f64 / n as f64
    }
}

/// Set voxels having a face neighbour outside the set or outside the grid,
/// as mm coordinates.
pub fn brute_surface(set: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<[f64; 3]> {
    let at = |i: i64, j: i64, k: i64| -> bool {
        if i < 0 || j < 0 || k < 0 || i >= dims[0] as i64 || j >= dims[1] as i64 || k >= dims[2] as i64 {
            return false;
        }
        set[i as usize + dims[0] * (j as usize + dims[1] * k as usize)]
    };
    let mut out = Vec::new();
    for k in 0..dims[2] as i64 {
        for j in 0..dims[1] as i64 {
            for i in 0..dims[0] as i64 {
                if !at(i, j, k) {
                    continue;
                }
                let boundary = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                    .iter()
                    .any(|&(a, b, c)| !at(i + a, j + b, k + c));
                if boundary {
                    out.push([i as f64 * spacing[0], j as f64 * spacing[1], k as f64 * spacing[2]]);
                }
            }
        }
    }
    out
}

/// Average symmetric surface distance by all-pairs search.
pub fn brute_asd(g: &[bool], p: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> f64 {
    let sg = brute_surface(g, dims, spacing);
    let sp = brute_surface(p, dims, spacing);
    if sg.is_empty() || sp.is_empty() {
        return f64::NAN;
    }
    let nearest = |a: &[f64; 3], set: &[[f64; 3]]| {
        set.iter()
            .map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let total: f64 = sg.iter().map(|a| nearest(a, &sp)).sum::<f64>() + sp.iter().map(|b| nearest(b, &sg)).sum::<f64>();
    total / (sg.len() + sp.len()) as f64
}

/// Two-sided exact Mann-Whitney p by enumerating every split of the pooled
/// sample into groups of the original sizes.
pub fn enumerated_mwu_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let m = a.len();
    let u_of = |mask: u32| -> f64 {
        let mut u = 0.0;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                if pooled[i] > pooled[j] {
                    u += 1.0;
                } else if pooled[i] == pooled[j] {
                    u += 0.5;
                }
            }
        }
        u
    };
    let observed = u_of((1u32 << m) - 1);
    let (mut total, mut le, mut ge) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let u = u_of(mask);
        total += 1;
        if u <= observed {
            le += 1;
        }
        if u >= observed {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

/// Sizes of the 26-connected components of `set`, by flood fill, together
/// with a per-voxel component index (usize::MAX outside the set). Components
/// are numbered in order of their first voxel.
pub fn flood_fill(set: &[bool], dims: [usize; 3]) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; set.len()];
    let mut sizes = Vec::new();
    for start in 0..set.len() {
        if !set[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![start];
        comp[start] = id;
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            let (i, j, k) = (v % dims[0], (v / dims[0]) % dims[1], v / (dims[0] * dims[1]));
            for dk in -1i64..=1 {
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (x, y, z) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        if x < 0 || y < 0 || z < 0 || x >= dims[0] as i64 || y >= dims[1] as i64 || z >= dims[2] as i64
                        {
                            continue;
                        }
                        let w = x as usize + dims[0] * (y as usize + dims[1] * z as usize);
                        if set[w] && comp[w] == usize::MAX {
                            comp[w] = id;
                            stack.push(w);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    (sizes, comp)
}
