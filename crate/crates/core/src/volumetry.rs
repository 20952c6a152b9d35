//! Group volumetry: ROI volumes, TIV normalization, the Mann-Whitney U test
//! and Bonferroni thresholds.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Largest combined sample size tested with the exact null distribution.
pub const EXACT_MAX_N: usize = 12;

/// Voxel count of `label` times the voxel volume (mm³).
pub fn roi_volume(labels: &LabelVolume, label: u16) -> f64 {
    labels.count(label) as f64 * labels.geometry().voxel_volume()
}

pub fn normalize(raw: f64, tiv: f64) -> Result<f64> {
    if !tiv.is_finite() || tiv <= 0.0 {
        return Err(Error::InvalidParameter(format!("TIV must be positive, got {tiv}")));
    }
    Ok(raw / tiv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiVolumeRecord {
    pub subject: String,
    pub label: u16,
    pub raw_mm3: f64,
    pub tiv_mm3: f64,
    pub normalized: f64,
}

impl RoiVolumeRecord {
    pub fn new(subject: impl Into<String>, label: u16, raw_mm3: f64, tiv_mm3: f64) -> Result<Self> {
        if raw_mm3.is_nan() || raw_mm3 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ROI volume must be non-negative, got {raw_mm3}"
            )));
        }
        let normalized = normalize(raw_mm3, tiv_mm3)?;
        Ok(Self {
            subject: subject.into(),
            label,
            raw_mm3,
            tiv_mm3,
            normalized,
        })
    }

    pub fn from_labels(subject: impl Into<String>, labels: &LabelVolume, label: u16, tiv_mm3: f64) -> Result<Self> {
        Self::new(subject, label, roi_volume(labels, label), tiv_mm3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Statistic of the first group: pairs with `a > b`, ties counting 1/2.
    pub u_a: f64,
    pub u_b: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: PValueMethod,
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut s = 0;
    while s < order.len() {
        let mut e = s + 1;
        while e < order.len() && pooled[order[e]] == pooled[order[s]] {
            e += 1;
        }
        let r = (s + 1 + e) as f64 / 2.0;
        for &o in &order[s..e] {
            ranks[o] = r;
        }
        ties.push(e - s);
        s = e;
    }
    (ranks, ties)
}

/// Number of group orderings giving each value of U, for groups of sizes
/// `m` and `n`. Index `u` holds the count for `U = u`.
pub fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // f[i][j][u] = f[i-1][j][u-j] + f[i][j-1][u]
    let maxu = m * n;
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; maxu + 1]; n + 1];
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for _i in 1..=m {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; maxu + 1]; n + 1];
        cur[0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=maxu {
                let from_a = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = from_a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev[n].clone()
}

fn exact_p(u: f64, m: usize, n: usize) -> f64 {
    let dist = u_distribution(m, n);
    let total: f64 = dist.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = dist[..=u].iter().sum::<f64>() / total;
    let upper: f64 = dist[u..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_p(u: f64, m: usize, n: usize, ties: &[usize]) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let big_n = mf + nf;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (big_n * (big_n - 1.0));
    let var = mf * nf / 12.0 * ((big_n + 1.0) - tie_term);
    if var.is_nan() || var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mf * nf / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided Mann-Whitney U test. Exact when the combined size is at most
/// [`EXACT_MAX_N`] and there are no ties; otherwise the normal approximation
/// with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("Mann-Whitney group"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("Mann-Whitney samples must be finite".into()));
    }
    let (m, n) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r_a: f64 = ranks[..m].iter().sum();
    let u_a = r_a - (m * (m + 1)) as f64 / 2.0;
    let u_b = (m * n) as f64 - u_a;
    let tied = ties.iter().any(|&t| t > 1);
    let (p, method) = if m + n <= EXACT_MAX_N && !tied {
        (exact_p(u_a, m, n), PValueMethod::Exact)
    } else {
        (normal_p(u_a, m, n, &ties), PValueMethod::Normal)
    };
    Ok(MannWhitney { u_a, u_b, p, method })
}

/// Per-test threshold `alpha / m`.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidParameter(
            "Bonferroni test count must be at least 1".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "significance level {alpha} outside (0, 1)"
        )));
    }
    Ok(alpha / m as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTestResult {
    pub u: f64,
    pub p: f64,
    pub threshold: f64,
    pub significant: bool,
    pub method: PValueMethod,
}

/// Mann-Whitney test of `a` against `b` at the Bonferroni threshold for `m` tests.
pub fn group_test(a: &[f64], b: &[f64], alpha: f64, m: usize) -> Result<GroupTestResult> {
    let threshold = bonferroni(alpha, m)?;
    let mw = mann_whitney_u(a, b)?;
    Ok(GroupTestResult {
        u: mw.u_a,
        p: mw.p,
        threshold,
        significant: mw.p < threshold,
        method: mw.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn roi_volume_arithmetic() {
        let g = Geometry::from_spacing([4, 4, 4], [0.75; 3]).unwrap();
        let labels = LabelVolume::from_fn(g, |[i, j, k]| if i + 4 * (j + 4 * k) < 10 { 3 } else { 0 }).unwrap();
        assert_eq!(labels.count(3), 10);
        assert_eq!(roi_volume(&labels, 3), 4.21875);
        assert_eq!(roi_volume(&labels, 7), 0.0);
        let full = LabelVolume::filled(Geometry::from_spacing([4, 4, 4], [1.0; 3]).unwrap(), 2).unwrap();
        assert_eq!(roi_volume(&full, 2), 64.0);
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(normalize(0.0, 5.0).unwrap(), 0.0);
        assert!(normalize(1.0, 0.0).is_err());
        assert!(RoiVolumeRecord::new("s", 1, -1.0, 2.0).is_err());
        assert_eq!(RoiVolumeRecord::new("s", 1, 1.0, 4.0).unwrap().normalized, 0.25);
    }

    #[test]
    fn exact_examples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u_a, 0.0);
        assert_eq!(r.method, PValueMethod::Exact);
        assert!((r.p - 0.1).abs() < 1e-15);
        let r = mann_whitney_u(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_eq!(r.u_a, 1.0);
        assert!((r.p - 2.0 / 3.0).abs() < 1e-15);
        let s = mann_whitney_u(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert_eq!(s.p, r.p);
    }

    #[test]
    fn u_distribution_small() {
        assert_eq!(u_distribution(2, 2), vec![1.0, 1.0, 2.0, 1.0, 1.0]);
        assert_eq!(u_distribution(3, 3).iter().sum::<f64>(), 20.0);
        assert_eq!(u_distribution(1, 0), vec![1.0]);
    }

    #[test]
    fn ties_use_normal_approximation() {
        let r = mann_whitney_u(&[1.0, 2.0, 2.0], &[2.0, 3.0, 4.0]).unwrap();
        assert_eq!(r.method, PValueMethod::Normal);
        assert_eq!(r.u_a + r.u_b, 9.0);
        assert!((0.0..=1.0).contains(&r.p));
        let all_tied = mann_whitney_u(&[1.0; 20], &[1.0; 20]).unwrap();
        assert_eq!(all_tied.p, 1.0);
    }

    #[test]
    fn bonferroni_cases() {
        assert!((bonferroni(0.05, 6).unwrap() - 0.05 / 6.0).abs() < 1e-18);
        assert_eq!(bonferroni(0.05, 1).unwrap(), 0.05);
        assert!((bonferroni(0.05, 5).unwrap() - 0.01).abs() < 1e-18);
        assert!(bonferroni(0.05, 0).is_err());
    }
}
