//! Overlap and surface-distance metrics, per-label evaluation with
//! missing-label semantics, and bootstrap aggregation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelTable;
use crate::rng::StreamKey;
use crate::volume::{BrainMask, LabelVolume};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const BOOTSTRAP_SEED: u64 = 0x5EED_B007;

/// Dice coefficient of two voxel sets; two empty sets score 1.
pub fn dsc_slices(g: &[bool], p: &[bool]) -> f64 {
    assert_eq!(g.len(), p.len());
    let (mut inter, mut ng, mut np) = (0usize, 0usize, 0usize);
    for (&a, &b) in g.iter().zip(p) {
        ng += a as usize;
        np += b as usize;
        inter += (a && b) as usize;
    }
    if ng + np == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (ng + np) as f64
    }
}

pub fn dsc(g: &BrainMask, p: &BrainMask) -> Result<f64> {
    g.geometry().ensure_same_grid(p.geometry(), "dice operands")?;
    Ok(dsc_slices(g.data(), p.data()))
}

/// Boundary voxels of a segment under the 6-neighbourhood.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SurfacePointSet {
    pub voxels: Vec<[usize; 3]>,
    /// Voxel index times spacing (mm).
    pub points: Vec<[f64; 3]>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

fn is_boundary(data: &[bool], dims: [usize; 3], p: [usize; 3]) -> bool {
    for axis in 0..3 {
        for step in [-1i64, 1] {
            let q = p[axis] as i64 + step;
            if q < 0 || q >= dims[axis] as i64 {
                return true;
            }
            let mut n = p;
            n[axis] = q as usize;
            if !data[n[0] + dims[0] * (n[1] + dims[1] * n[2])] {
                return true;
            }
        }
    }
    false
}

pub fn extract_surface(segment: &BrainMask) -> SurfacePointSet {
    let dims = segment.dims();
    let s = segment.spacing();
    let data = segment.data();
    let geom = segment.geometry();
    let mut out = SurfacePointSet::default();
    for (idx, _) in data.iter().enumerate().filter(|(_, &v)| v) {
        let p = geom.coords(idx);
        if is_boundary(data, dims, p) {
            out.voxels.push(p);
            out.points
                .push([p[0] as f64 * s[0], p[1] as f64 * s[1], p[2] as f64 * s[2]]);
        }
    }
    out
}

/// Exact 1-D squared distance transform (lower envelope of parabolas) on a
/// line with sample spacing `h`; `f` holds squared distances, `INF` for none.
fn edt_line(f: &[f64], h: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let pos = |q: usize| q as f64 * h;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (mm²) from every voxel of a `dims` box to the
/// nearest seed voxel.
fn squared_edt(seeds: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    let mut res = Vec::new();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        let n = dims[axis];
        line.resize(n, 0.0);
        res.resize(n, 0.0);
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for ib in 0..dims[b] {
            for ia in 0..dims[a] {
                let base = ia * strides[a] + ib * strides[b];
                for q in 0..n {
                    line[q] = d[base + q * strides[axis]];
                }
                edt_line(&line, spacing[axis], &mut res, &mut v, &mut z);
                for q in 0..n {
                    d[base + q * strides[axis]] = res[q];
                }
            }
        }
    }
    d
}

/// Sum over `from` of the distance to the nearest point of `to`, using a
/// distance transform over the joint bounding box.
fn directed_distance_sum(from: &SurfacePointSet, to: &SurfacePointSet, spacing: [f64; 3]) -> f64 {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for p in from.voxels.iter().chain(&to.voxels) {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let dims: [usize; 3] = std::array::from_fn(|d| hi[d] - lo[d] + 1);
    let local = |p: &[usize; 3]| (p[0] - lo[0]) + dims[0] * ((p[1] - lo[1]) + dims[1] * (p[2] - lo[2]));
    let mut seeds = vec![false; dims.iter().product()];
    for p in &to.voxels {
        seeds[local(p)] = true;
    }
    let d2 = squared_edt(&seeds, dims, spacing);
    from.voxels.iter().map(|p| d2[local(p)].sqrt()).sum()
}

/// Average symmetric surface distance (mm); NaN when either segment is empty.
pub fn asd(g: &BrainMask, p: &BrainMask) -> Result<f64> {
    g.geometry()
        .ensure_same_grid(p.geometry(), "surface distance operands")?;
    let sg = extract_surface(g);
    let sp = extract_surface(p);
    Ok(asd_surfaces(&sg, &sp, g.spacing()))
}

pub fn asd_surfaces(sg: &SurfacePointSet, sp: &SurfacePointSet, spacing: [f64; 3]) -> f64 {
    if sg.is_empty() || sp.is_empty() {
        return f64::NAN;
    }
    let total = directed_distance_sum(sg, sp, spacing) + directed_distance_sum(sp, sg, spacing);
    total / (sg.len() + sp.len()) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub label: u16,
    pub dsc: f64,
    /// mm, NaN when the label is missing from one side.
    pub asd: f64,
    /// Label absent from both ground truth and prediction.
    pub absent_in_both: bool,
}

/// Labels 1..=34: every table entry except white-matter hypointensities.
pub fn default_eval_labels() -> Vec<u16> {
    LabelTable.evaluated().into_iter().collect()
}

pub fn evaluate(gt: &LabelVolume, pred: &LabelVolume, labels: &[u16]) -> Result<Vec<MetricRecord>> {
    gt.geometry()
        .ensure_same_grid(pred.geometry(), "ground truth and prediction")?;
    let spacing = gt.spacing();
    Ok(labels
        .par_iter()
        .map(|&label| {
            let g = gt.mask_of(label);
            let p = pred.mask_of(label);
            let (ng, np) = (g.count(), p.count());
            if ng == 0 && np == 0 {
                return MetricRecord {
                    label,
                    dsc: 1.0,
                    asd: 0.0,
                    absent_in_both: true,
                };
            }
            if ng == 0 || np == 0 {
                return MetricRecord {
                    label,
                    dsc: 0.0,
                    asd: f64::NAN,
                    absent_in_both: false,
                };
            }
            let dsc = dsc_slices(g.data(), p.data());
            let asd = asd_surfaces(&extract_surface(&g), &extract_surface(&p), spacing);
            MetricRecord {
                label,
                dsc,
                asd,
                absent_in_both: false,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Finite values used.
    pub n: usize,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(median_sorted(&v))
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Median with a 95% percentile-bootstrap interval using the default
/// resample count and seed. NaN entries are dropped.
pub fn aggregate(values: &[f64]) -> Result<AggregateSummary> {
    aggregate_with(values, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED)
}

pub fn aggregate_with(values: &[f64], resamples: usize, seed: u64) -> Result<AggregateSummary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return Err(Error::AllNan);
    }
    if resamples == 0 {
        return Err(Error::InvalidParameter(
            "bootstrap resample count must be positive".into(),
        ));
    }
    // sorting first makes the result independent of input order
    v.sort_by(f64::total_cmp);
    let med = median_sorted(&v);
    let n = v.len();
    let mut rng = StreamKey::new(seed).rng();
    let mut boot = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = v[rng.random_range(0..n)];
        }
        buf.sort_by(f64::total_cmp);
        boot.push(median_sorted(&buf));
    }
    boot.sort_by(f64::total_cmp);
    let ci_low = quantile_sorted(&boot, 0.025).min(med);
    let ci_high = quantile_sorted(&boot, 0.975).max(med);
    Ok(AggregateSummary {
        median: med,
        ci_low,
        ci_high,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn mask(dims: [usize; 3], spacing: [f64; 3], on: impl Fn([usize; 3]) -> bool) -> BrainMask {
        BrainMask::from_fn(Geometry::from_spacing(dims, spacing).unwrap(), on).unwrap()
    }

    #[test]
    fn dice_shifted_cube_is_half() {
        let a = mask([4, 3, 3], [1.0; 3], |[i, j, k]| i < 2 && j < 2 && k < 2);
        let b = mask([4, 3, 3], [1.0; 3], |[i, j, k]| (1..3).contains(&i) && j < 2 && k < 2);
        assert_eq!(dsc(&a, &b).unwrap(), 0.5);
        assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        let e = mask([4, 3, 3], [1.0; 3], |_| false);
        assert_eq!(dsc(&e, &e).unwrap(), 1.0);
        assert_eq!(dsc(&a, &e).unwrap(), 0.0);
    }

    #[test]
    fn surface_of_solid_cube() {
        let m = mask([5, 5, 5], [1.0; 3], |p| p.iter().all(|&c| (1..4).contains(&c)));
        let s = extract_surface(&m);
        assert_eq!(s.len(), 26);
        assert!(!s.voxels.contains(&[2, 2, 2]));
        let single = mask([3, 3, 3], [0.5, 1.0, 2.0], |p| p == [1, 2, 1]);
        assert_eq!(extract_surface(&single).points, vec![[0.5, 2.0, 2.0]]);
    }

    #[test]
    fn border_voxels_are_surface() {
        let full = mask([3, 3, 3], [1.0; 3], |_| true);
        assert_eq!(extract_surface(&full).len(), 26);
    }

    #[test]
    fn asd_two_points() {
        let a = mask([6, 1, 1], [1.0; 3], |p| p == [0, 0, 0]);
        let b = mask([6, 1, 1], [1.0; 3], |p| p == [3, 0, 0]);
        assert_eq!(asd(&a, &b).unwrap(), 3.0);
        assert_eq!(asd(&a, &a).unwrap(), 0.0);
        let e = mask([6, 1, 1], [1.0; 3], |_| false);
        assert!(asd(&a, &e).unwrap().is_nan());
    }

    #[test]
    fn asd_anisotropic_diagonal() {
        let s = [0.5, 2.0, 1.0];
        let a = mask([4, 4, 4], s, |p| p == [0, 0, 0]);
        let b = mask([4, 4, 4], s, |p| p == [3, 1, 2]);
        let d = (1.5f64 * 1.5 + 2.0 * 2.0 + 2.0 * 2.0).sqrt();
        assert!((asd(&a, &b).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn edt_line_matches_brute_force() {
        let f = [f64::INFINITY, 0.0, f64::INFINITY, f64::INFINITY, 4.0, f64::INFINITY];
        let mut out = [0.0; 6];
        edt_line(&f, 1.5, &mut out, &mut Vec::new(), &mut Vec::new());
        for q in 0..6 {
            let bf = (0..6)
                .filter(|&p| f[p].is_finite())
                .map(|p| ((q as f64 - p as f64) * 1.5).powi(2) + f[p])
                .fold(f64::INFINITY, f64::min);
            assert!((out[q] - bf).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_label_semantics() {
        let g = Geometry::from_spacing([4, 4, 4], [1.0; 3]).unwrap();
        let gt = LabelVolume::from_fn(g.clone(), |[i, _, _]| if i < 2 { 1 } else { 2 }).unwrap();
        let pred = LabelVolume::from_fn(g, |[i, _, _]| if i < 2 { 1 } else { 0 }).unwrap();
        let recs = evaluate(&gt, &pred, &[1, 2, 3]).unwrap();
        assert_eq!((recs[0].dsc, recs[0].asd), (1.0, 0.0));
        assert_eq!(recs[1].dsc, 0.0);
        assert!(recs[1].asd.is_nan());
        assert!(recs[2].absent_in_both && recs[2].dsc == 1.0 && recs[2].asd == 0.0);
    }

    #[test]
    fn default_label_set_has_34_entries() {
        let l = default_eval_labels();
        assert_eq!(l.len(), 34);
        assert!(!l.contains(&35) && !l.contains(&36) && !l.contains(&0));
    }

    #[test]
    fn aggregate_basics() {
        let s = aggregate(&[2.5; 7]).unwrap();
        assert_eq!((s.median, s.ci_low, s.ci_high), (2.5, 2.5, 2.5));
        let s = aggregate(&[5.0, 1.0, f64::NAN, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.n, 5);
        assert!(s.ci_low <= 3.0 && 3.0 <= s.ci_high);
        assert!(matches!(aggregate(&[f64::NAN]), Err(Error::AllNan)));
        assert!(matches!(aggregate(&[]), Err(Error::AllNan)));
    }
}
