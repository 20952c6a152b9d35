use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::affine::uniform;
use super::config::GenerativeConfig;
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::volume::{LabelVolume, ScalarVolume, MAX_LABEL};

const N_LABELS: usize = MAX_LABEL as usize + 1;

/// Gaussian intensity parameters per label.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityPrior {
    entries: [Option<(f64, f64)>; N_LABELS],
}

impl IntensityPrior {
    pub fn empty() -> Self {
        Self {
            entries: [None; N_LABELS],
        }
    }

    /// Draws a mean and a std for every label 0..=36, in label order.
    pub fn sample<R: Rng + ?Sized>(cfg: &GenerativeConfig, rng: &mut R) -> Self {
        let mut prior = Self::empty();
        for e in prior.entries.iter_mut() {
            let mean = uniform(rng, cfg.a_mu, cfg.b_mu);
            let std = uniform(rng, cfg.a_sigma, cfg.b_sigma);
            *e = Some((mean, std));
        }
        prior
    }

    pub fn with(mut self, label: u16, mean: f64, std: f64) -> Self {
        self.entries[label as usize] = Some((mean, std));
        self
    }

    pub fn get(&self, label: u16) -> Option<(f64, f64)> {
        self.entries.get(label as usize).copied().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u16, f64, f64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(l, e)| e.map(|(m, s)| (l as u16, m, s)))
    }
}

/// Per-voxel draws `N(mean_l, std_l)` before any normalization. Each
/// z-slice reads its own substream of `key`.
pub fn sample_raw_intensities(labels: &LabelVolume, prior: &IntensityPrior, key: StreamKey) -> Result<ScalarVolume> {
    for l in labels.label_domain() {
        if prior.get(l).is_none() {
            return Err(Error::MissingPrior(l));
        }
    }
    let [nx, ny, _] = labels.dims();
    let slab = nx * ny;
    let src = labels.data();
    let mut out = vec![0f32; src.len()];
    out.par_chunks_mut(slab).enumerate().for_each(|(k, slice)| {
        let mut rng = key.substream(k as u64);
        for (o, &l) in slice.iter_mut().zip(&src[k * slab..]) {
            let (mean, std) = prior.get(l).expect("checked above");
            let noise: f64 = rng.sample(StandardNormal);
            *o = (mean + std * noise) as f32;
        }
    });
    labels.with_data(out)
}

/// Rescales values linearly onto `[0, 1]`; constant input maps to 0.
/// Returns the `(min, max)` used.
pub fn min_max_normalize(img: &ScalarVolume) -> (ScalarVolume, (f32, f32)) {
    let (lo, hi) = img
        .data()
        .par_iter()
        .fold(
            || (f32::INFINITY, f32::NEG_INFINITY),
            |(lo, hi), &v| (lo.min(v), hi.max(v)),
        )
        .reduce(
            || (f32::INFINITY, f32::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    let range = hi - lo;
    let data = img
        .data()
        .par_iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect();
    (img.with_data(data).expect("same geometry"), (lo, hi))
}

/// Noisy per-label signal, min-max normalized to `[0, 1]`.
pub fn sample_intensities(labels: &LabelVolume, prior: &IntensityPrior, key: StreamKey) -> Result<ScalarVolume> {
    Ok(min_max_normalize(&sample_raw_intensities(labels, prior, key)?).0)
}
