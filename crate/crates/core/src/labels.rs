//! The whole-brain label index table.

use std::collections::BTreeSet;

use crate::volume::MAX_LABEL;

pub const BACKGROUND: u16 = 0;
pub const WM_HYPOINTENSITIES: u16 = 35;
/// Synthetic label for tissue between the original and the dilated brain mask.
pub const EXTRA_CEREBRAL: u16 = 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hemisphere {
    Left,
    Right,
    Midline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelEntry {
    pub index: u16,
    pub name: &'static str,
    pub hemisphere: Hemisphere,
}

const fn entry(index: u16, name: &'static str, hemisphere: Hemisphere) -> LabelEntry {
    LabelEntry {
        index,
        name,
        hemisphere,
    }
}

use Hemisphere::{Left, Midline, Right};

static ENTRIES: [LabelEntry; 36] = [
    entry(1, "Cerebral white matter", Left),
    entry(2, "Cerebral cortex", Left),
    entry(3, "Lateral Ventricle", Left),
    entry(4, "Inferior Lateral Ventricle", Left),
    entry(5, "Cerebellar White Matter", Left),
    entry(6, "Cerebellar Cortex", Left),
    entry(7, "Thalamus", Left),
    entry(8, "Caudate", Left),
    entry(9, "Putamen", Left),
    entry(10, "Pallidum", Left),
    entry(11, "3rd-Ventricle", Midline),
    entry(12, "4th-Ventricle", Midline),
    entry(13, "Brain Stem", Midline),
    entry(14, "Hippocampus", Left),
    entry(15, "Amygdala", Left),
    entry(16, "CSF", Midline),
    entry(17, "Accumbens", Left),
    entry(18, "Ventral DC", Left),
    entry(19, "Choroid Plexus", Left),
    entry(20, "Cerebral white matter", Right),
    entry(21, "Cerebral cortex", Right),
    entry(22, "Lateral Ventricle", Right),
    entry(23, "Inferior Lateral Ventricle", Right),
    entry(24, "Cerebellar White Matter", Right),
    entry(25, "Cerebellar Cortex", Right),
    entry(26, "Thalamus", Right),
    entry(27, "Caudate", Right),
    entry(28, "Putamen", Right),
    entry(29, "Pallidum", Right),
    entry(30, "Hippocampus", Right),
    entry(31, "Amygdala", Right),
    entry(32, "Accumbens", Right),
    entry(33, "Ventral DC", Right),
    entry(34, "Choroid Plexus", Right),
    entry(35, "WM-hypointensities", Midline),
    entry(36, "Extra-Cerebral", Midline),
];

/// Ordered label table, indices 1..=36.
#[derive(Clone, Copy, Debug)]
pub struct LabelTable;

impl LabelTable {
    pub fn entries(&self) -> &'static [LabelEntry] {
        &ENTRIES
    }

    pub fn get(&self, index: u16) -> Option<&'static LabelEntry> {
        index.checked_sub(1).and_then(|i| ENTRIES.get(i as usize))
    }

    /// Display name with hemisphere suffix, e.g. `Putamen (lh)`.
    pub fn display_name(&self, index: u16) -> Option<String> {
        self.get(index).map(|e| match e.hemisphere {
            Left => format!("{} (lh)", e.name),
            Right => format!("{} (rh)", e.name),
            Midline => e.name.to_string(),
        })
    }

    /// Labels a segmentation network predicts: everything but extra-cerebral.
    pub fn segmented(&self) -> BTreeSet<u16> {
        (1..EXTRA_CEREBRAL).collect()
    }

    /// Labels scored by the evaluation metrics: segmented labels minus WM-hypointensities.
    pub fn evaluated(&self) -> BTreeSet<u16> {
        (1..WM_HYPOINTENSITIES).collect()
    }
}

const _: () = assert!(EXTRA_CEREBRAL == MAX_LABEL);
