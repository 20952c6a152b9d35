//! Seeded k-fold cross-validation splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub subject: String,
    /// Fold in which this subject is used for validation.
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// With a single fold every subject is both trained on and validated.
    pub degenerate: bool,
    pub entries: Vec<FoldEntry>,
}

impl FoldAssignment {
    pub fn validation(&self, fold: usize) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.fold == fold)
            .map(|e| e.subject.as_str())
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| self.degenerate || e.fold != fold)
            .map(|e| e.subject.as_str())
            .collect()
    }
}

/// Shuffles subjects with `seed` and cuts the result into `k` contiguous
/// folds whose sizes differ by at most one.
pub fn split_folds(subjects: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 1 {
        return Err(Error::InvalidParameter("fold count must be at least 1".into()));
    }
    if subjects.len() < k {
        return Err(Error::NotEnoughSubjects {
            subjects: subjects.len(),
            folds: k,
        });
    }
    let mut order: Vec<&String> = subjects.iter().collect();
    order.shuffle(&mut StreamKey::new(seed).rng());
    let n = order.len();
    let entries = order
        .into_iter()
        .enumerate()
        .map(|(pos, s)| FoldEntry {
            subject: s.clone(),
            fold: (0..k).find(|&f| pos < (f + 1) * n / k).unwrap(),
        })
        .collect();
    Ok(FoldAssignment {
        k,
        seed,
        degenerate: k == 1,
        entries,
    })
}
