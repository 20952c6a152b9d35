//! Resolving file-or-directory arguments into named NIfTI inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use brainsynth::nifti::{case_name, is_nifti_path};

use crate::error::{Classify, CliError, CliResult};

/// NIfTI files keyed by case name. A file argument yields one entry; a
/// directory yields every `.nii` / `.nii.gz` directly inside it.
pub fn collect(path: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        let entries = std::fs::read_dir(path).data_err(format!("cannot list {}", path.display()))?;
        for entry in entries {
            let p = entry.data_err(format!("cannot list {}", path.display()))?.path();
            if p.is_file() && is_nifti_path(&p) {
                if let Some(prev) = out.insert(case_name(&p), p.clone()) {
                    return Err(CliError::data(format!(
                        "duplicate case {} ({} and {})",
                        case_name(&p),
                        prev.display(),
                        p.display()
                    )));
                }
            }
        }
        if out.is_empty() {
            return Err(CliError::data(format!("no NIfTI files in {}", path.display())));
        }
    } else if path.is_file() {
        out.insert(case_name(path), path.to_path_buf());
    } else {
        return Err(CliError::data(format!("{} does not exist", path.display())));
    }
    Ok(out)
}

/// Pairs two collections by case name; a single file on either side pairs
/// with a single file on the other regardless of name.
pub fn pair(a: &Path, b: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    let left = collect(a)?;
    let right = collect(b)?;
    if left.len() == 1 && right.len() == 1 && a.is_file() && b.is_file() {
        let (name, la) = left.into_iter().next().expect("one entry");
        let (_, rb) = right.into_iter().next().expect("one entry");
        return Ok(vec![(name, la, rb)]);
    }
    let mut out = Vec::new();
    for (name, la) in left {
        let rb = right
            .get(&name)
            .ok_or_else(|| CliError::data(format!("no match for case {name} in {}", b.display())))?;
        out.push((name, la, rb.clone()));
    }
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).data_err(format!("cannot create {}", dir.display()))
}
