//! Inference-side post-processing: softmax ensembling across models and
//! validation-gated largest-component retention.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::connected_components;
use crate::error::{Error, Result};
use crate::labels::EXTRA_CEREBRAL;
use crate::metrics::dsc_slices;
use crate::nifti;
use crate::volume::{Geometry, LabelVolume, MAX_LABEL};

const SUM_TOLERANCE: f32 = 1e-4;

/// Per-label probability volumes; channel `c` holds label `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityStack {
    geom: Geometry,
    channels: Vec<Vec<f32>>,
}

impl ProbabilityStack {
    pub fn new(geom: Geometry, channels: Vec<Vec<f32>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptyInput("probability stack"));
        }
        if channels.len() > MAX_LABEL as usize + 1 {
            return Err(Error::LabelOutOfRange((channels.len() - 1) as f64));
        }
        if channels.iter().any(|c| c.len() != geom.len()) {
            return Err(Error::InvalidGeometry(
                "probability channel length does not match grid".into(),
            ));
        }
        for idx in 0..geom.len() {
            let mut sum = 0.0f32;
            for c in &channels {
                let p = c[idx];
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidParameter(format!("probability {p} at voxel {idx}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "probabilities sum to {sum} at voxel {idx}"
                )));
            }
        }
        Ok(Self { geom, channels })
    }

    /// Probability 1 for each voxel's label.
    pub fn one_hot(labels: &LabelVolume, n_channels: usize) -> Result<Self> {
        let mut channels = vec![vec![0.0f32; labels.len()]; n_channels];
        for (idx, &l) in labels.data().iter().enumerate() {
            let c = channels.get_mut(l as usize).ok_or(Error::LabelOutOfRange(l as f64))?;
            c[idx] = 1.0;
        }
        Self::new(labels.geometry().clone(), channels)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, label: usize) -> &[f32] {
        &self.channels[label]
    }

    pub fn argmax(&self) -> LabelVolume {
        ensemble(std::slice::from_ref(self)).expect("a single valid stack")
    }

    /// Reads a 4D NIfTI whose fourth axis is the label index.
    pub fn read(path: &Path) -> Result<Self> {
        let (geom, frames) = nifti::read_frames(path)?;
        Self::new(geom, frames)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        nifti::write_frames(&self.geom, &self.channels, path)
    }
}

/// Voxelwise mean of the stacks followed by argmax; ties go to the lowest label.
pub fn ensemble(stacks: &[ProbabilityStack]) -> Result<LabelVolume> {
    let first = stacks.first().ok_or(Error::EmptyInput("probability stacks"))?;
    for s in &stacks[1..] {
        first.geom.ensure_same_grid(&s.geom, "probability stacks")?;
        if s.n_channels() != first.n_channels() {
            return Err(Error::LabelSetMismatch(format!(
                "{} vs {} channels",
                first.n_channels(),
                s.n_channels()
            )));
        }
    }
    let n_ch = first.n_channels();
    let labels: Vec<u16> = (0..first.geom.len())
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(stacks.len()),
            |buf: &mut Vec<f32>, idx| {
                let mut best = 0usize;
                let mut best_p = f64::NEG_INFINITY;
                for c in 0..n_ch {
                    buf.clear();
                    buf.extend(stacks.iter().map(|s| s.channels[c][idx]));
                    // summing in sorted order makes the mean independent of stack order
                    buf.sort_by(f32::total_cmp);
                    let p = buf.iter().map(|&v| v as f64).sum::<f64>() / stacks.len() as f64;
                    if p > best_p {
                        best_p = p;
                        best = c;
                    }
                }
                best as u16
            },
        )
        .collect();
    LabelVolume::new(first.geom.clone(), labels)
}

/// Keeps only the largest 26-connected component of `label`; the other
/// components become background. Equal sizes keep the component holding
/// the lowest scan-order voxel.
pub fn largest_component(labels: &LabelVolume, label: u16) -> LabelVolume {
    let mask = labels.mask_of(label);
    let comps = connected_components(&mask);
    let Some(keep) = comps.largest() else {
        return labels.clone();
    };
    if comps.count() == 1 {
        return labels.clone();
    }
    let data = labels
        .data()
        .iter()
        .zip(&comps.ids)
        .map(|(&l, &id)| if id != 0 && id != keep { 0 } else { l })
        .collect();
    labels.with_data(data).expect("labels stay in range")
}

/// Labels for which largest-component retention is applied.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PostprocPolicy {
    labels: BTreeSet<u16>,
}

impl PostprocPolicy {
    pub fn new(labels: impl IntoIterator<Item = u16>) -> Result<Self> {
        let labels: BTreeSet<u16> = labels.into_iter().collect();
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l >= EXTRA_CEREBRAL) {
            return Err(Error::InvalidParameter(format!(
                "post-processing label {bad} outside 1..=35"
            )));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &BTreeSet<u16> {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: u16) -> bool {
        self.labels.contains(&label)
    }

    pub fn apply(&self, labels: &LabelVolume) -> LabelVolume {
        self.labels
            .iter()
            .fold(labels.clone(), |acc, &l| largest_component(&acc, l))
    }
}

/// Enables a label iff keep-largest strictly raises its mean Dice over the
/// validation pairs `(ground truth, prediction)`.
pub fn select_policy(pairs: &[(LabelVolume, LabelVolume)]) -> Result<PostprocPolicy> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("validation pairs"));
    }
    for (gt, pred) in pairs {
        gt.geometry().ensure_same_grid(pred.geometry(), "validation pair")?;
    }
    let candidates: Vec<u16> = (1..EXTRA_CEREBRAL).collect();
    // per pair: (dice without, dice with) for every candidate label
    let scores: Vec<Vec<(f64, f64)>> = pairs
        .par_iter()
        .map(|(gt, pred)| {
            candidates
                .iter()
                .map(|&l| {
                    let g = gt.mask_of(l);
                    let before = dsc_slices(g.data(), pred.mask_of(l).data());
                    let after = dsc_slices(g.data(), largest_component(pred, l).mask_of(l).data());
                    (before, after)
                })
                .collect()
        })
        .collect();
    let n = pairs.len() as f64;
    let enabled = candidates.iter().enumerate().filter_map(|(c, &l)| {
        let before: f64 = scores.iter().map(|s| s[c].0).sum::<f64>() / n;
        let after: f64 = scores.iter().map(|s| s[c].1).sum::<f64>() / n;
        (after > before).then_some(l)
    });
    PostprocPolicy::new(enabled)
}
