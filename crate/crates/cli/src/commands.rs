use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use brainsynth::folds::FoldAssignment;
use brainsynth::genmodel::generate_with_key;
use brainsynth::labels::LabelTable;
use brainsynth::metrics::{self, AggregateSummary, MetricRecord};
use brainsynth::nifti::{self, case_name};
use brainsynth::postproc::{self, PostprocPolicy, ProbabilityStack};
use brainsynth::resample::{self, ResampleSpec};
use brainsynth::rng::sample_key;
use brainsynth::volumetry::{self, GroupTestResult, RoiVolumeRecord};
use brainsynth::{labelprep, reorient, OrientationCode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Classify, CliError, CliResult};
use crate::inputs;
use crate::manifest::{parent_dir, RunManifest};
use crate::{
    EnsembleArgs, EvaluateArgs, GenerateArgs, PostprocArgs, PrepArgs, ResampleArgs, SelectPolicyArgs, SplitFoldsArgs,
    VolumeKind, VolumetryArgs,
};

fn parse_label_list(s: &str) -> CliResult<Vec<u16>> {
    let labels: Vec<u16> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u16>().usage_err(format!("bad label index `{t}`")))
        .collect::<CliResult<_>>()?;
    if labels.is_empty() {
        return Err(CliError::usage("empty label list"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > brainsynth::volume::MAX_LABEL) {
        return Err(CliError::usage(format!("label {bad} outside 0..=36")));
    }
    Ok(labels)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        inputs::ensure_dir(dir)?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").data_err(format!("cannot write {}", path.display()))
}

fn write_nifti<T: nifti::NiftiVoxel>(vol: &brainsynth::Volume<T>, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        inputs::ensure_dir(dir)?;
    }
    Ok(nifti::write_volume(vol, path)?)
}

fn finish(manifest: &mut RunManifest, dir: &Path) -> CliResult<()> {
    let path = manifest.write(dir)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn prep_labels(cfg: &PipelineConfig, a: &PrepArgs) -> CliResult<()> {
    if a.image.is_some() && a.out_image.is_none() {
        return Err(CliError::usage("--image requires --out-image"));
    }
    let labels = nifti::read_labels(&a.input).data_err(format!("reading {}", a.input.display()))?;
    let image = match &a.image {
        Some(p) => Some(nifti::read_scalar(p).data_err(format!("reading {}", p.display()))?),
        None => None,
    };
    let prepared = labelprep::prepare(&labels, image.as_ref(), a.radius)?;
    log::info!(
        "radius {} voxels, {} extra-cerebral voxels",
        prepared.radius,
        prepared.labels.count(brainsynth::labels::EXTRA_CEREBRAL)
    );

    let mut m = RunManifest::new("prep-labels", cfg);
    m.arg("radius", prepared.radius).input(&a.input)?;
    write_nifti(&prepared.labels, &a.out_labels)?;
    m.output(&a.out_labels);
    if let (Some(img), Some(out), Some(src)) = (&prepared.image, &a.out_image, &a.image) {
        write_nifti(img, out)?;
        m.input(src)?.output(out);
    }
    finish(&mut m, &parent_dir(&a.out_labels))
}

pub fn generate(cfg: &PipelineConfig, a: &GenerateArgs) -> CliResult<()> {
    if a.n_per_subject == 0 {
        return Err(CliError::usage("--n-per-subject must be at least 1"));
    }
    let subjects = inputs::collect(&a.labels)?;
    inputs::ensure_dir(&a.out)?;
    let (images_tr, labels_tr) = (a.out.join("imagesTr"), a.out.join("labelsTr"));
    if a.export_train {
        inputs::ensure_dir(&images_tr)?;
        inputs::ensure_dir(&labels_tr)?;
    }

    let written: Vec<Vec<PathBuf>> = subjects
        .par_iter()
        .map(|(case, path)| -> CliResult<Vec<PathBuf>> {
            let labels = nifti::read_labels(path).data_err(format!("reading {}", path.display()))?;
            let mut files = Vec::new();
            for k in 0..a.n_per_subject {
                let key = sample_key(cfg.seed, case, k as u64);
                let s = generate_with_key(&labels, &cfg.generative, key)
                    .data_err(format!("generating {case} sample {k}"))?;
                let img = a.out.join(format!("{case}_{k}_img.nii.gz"));
                let lbl = a.out.join(format!("{case}_{k}_lbl.nii.gz"));
                write_nifti(&s.image, &img)?;
                write_nifti(&s.target, &lbl)?;
                files.extend([img, lbl]);
                if a.export_train {
                    let img = images_tr.join(format!("{case}_{k}_0000.nii.gz"));
                    let lbl = labels_tr.join(format!("{case}_{k}.nii.gz"));
                    write_nifti(&s.image, &img)?;
                    write_nifti(&s.target, &lbl)?;
                    files.extend([img, lbl]);
                }
                log::info!("{case} sample {k} done");
            }
            Ok(files)
        })
        .collect::<CliResult<_>>()?;

    let mut m = RunManifest::new("generate", cfg);
    m.arg("n_per_subject", a.n_per_subject)
        .arg("export_train", a.export_train);
    for p in subjects.values() {
        m.input(p)?;
    }
    for p in written.iter().flatten() {
        m.output(p);
    }
    finish(&mut m, &a.out)
}

pub fn resample(cfg: &PipelineConfig, a: &ResampleArgs) -> CliResult<()> {
    let spec = match a.target_res {
        Some(r) => ResampleSpec::isotropic(r),
        None => cfg.resample.clone(),
    };
    spec.validate().usage_err("invalid --target-res")?;
    let orient: Option<OrientationCode> = a
        .orient
        .as_deref()
        .map(|s| s.parse().usage_err("invalid --orient"))
        .transpose()?;
    let ctx = format!("reading {}", a.input.display());
    match a.kind {
        VolumeKind::Image => {
            let mut v = nifti::read_scalar(&a.input).data_err(ctx)?;
            if let Some(o) = orient {
                v = reorient(&v, o)?;
            }
            write_nifti(&resample::resample_image(&v, &spec)?, &a.out)?;
        }
        VolumeKind::Labels => {
            let mut v = nifti::read_labels(&a.input).data_err(ctx)?;
            if let Some(o) = orient {
                v = reorient(&v, o)?;
            }
            write_nifti(&resample::resample_labelmap(&v, &spec)?, &a.out)?;
        }
    }
    let mut m = RunManifest::new("resample", cfg);
    m.arg("target_spacing", spec.target_spacing)
        .arg("kind", format!("{:?}", a.kind).to_lowercase())
        .arg("orient", orient.map(|o| o.to_string()))
        .input(&a.input)?
        .output(&a.out);
    finish(&mut m, &parent_dir(&a.out))
}

pub fn ensemble(cfg: &PipelineConfig, a: &EnsembleArgs) -> CliResult<()> {
    let files: Vec<PathBuf> = if a.probs.len() == 1 && a.probs[0].is_dir() {
        inputs::collect(&a.probs[0])?.into_values().collect()
    } else {
        a.probs.clone()
    };
    let stacks = files
        .iter()
        .map(|p| ProbabilityStack::read(p).data_err(format!("reading {}", p.display())))
        .collect::<CliResult<Vec<_>>>()?;
    let labels = postproc::ensemble(&stacks)?;
    write_nifti(&labels, &a.out)?;
    let mut m = RunManifest::new("ensemble", cfg);
    for p in &files {
        m.input(p)?;
    }
    m.output(&a.out);
    finish(&mut m, &parent_dir(&a.out))
}

fn read_policy(path: &Path) -> CliResult<PostprocPolicy> {
    let text = std::fs::read_to_string(path).data_err(format!("reading {}", path.display()))?;
    let labels: Vec<u16> =
        serde_json::from_str(&text).data_err(format!("{} is not a JSON list of labels", path.display()))?;
    PostprocPolicy::new(labels).data_err(format!("policy {}", path.display()))
}

pub fn postproc(cfg: &PipelineConfig, a: &PostprocArgs) -> CliResult<()> {
    let policy = read_policy(&a.policy)?;
    let labels = nifti::read_labels(&a.input).data_err(format!("reading {}", a.input.display()))?;
    write_nifti(&policy.apply(&labels), &a.out)?;
    let mut m = RunManifest::new("postproc", cfg);
    m.arg("policy", &policy)
        .input(&a.input)?
        .input(&a.policy)?
        .output(&a.out);
    finish(&mut m, &parent_dir(&a.out))
}

pub fn select_policy(cfg: &PipelineConfig, a: &SelectPolicyArgs) -> CliResult<()> {
    let pairs = inputs::pair(&a.gt, &a.pred)?;
    let mut m = RunManifest::new("select-policy", cfg);
    let mut volumes = Vec::new();
    for (_, g, p) in &pairs {
        volumes.push((
            nifti::read_labels(g).data_err(format!("reading {}", g.display()))?,
            nifti::read_labels(p).data_err(format!("reading {}", p.display()))?,
        ));
        m.input(g)?.input(p)?;
    }
    let policy = postproc::select_policy(&volumes)?;
    write_json(&a.out, &policy)?;
    m.arg("policy", &policy).output(&a.out);
    finish(&mut m, &parent_dir(&a.out))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    subject: &'a str,
    label: u16,
    dsc: f64,
    asd_mm: f64,
}

#[derive(Serialize)]
struct LabelSummary {
    name: String,
    /// Records with an undefined surface distance.
    asd_missing: usize,
    dsc: Option<AggregateSummary>,
    asd_mm: Option<AggregateSummary>,
}

#[derive(Serialize)]
struct EvaluationSummary {
    subjects: usize,
    bootstrap_seed: u64,
    bootstrap_resamples: usize,
    overall: LabelSummary,
    labels: BTreeMap<u16, LabelSummary>,
}

fn summarize(name: String, recs: &[&MetricRecord], seed: u64) -> CliResult<LabelSummary> {
    let agg = |v: Vec<f64>| match metrics::aggregate_with(&v, metrics::BOOTSTRAP_RESAMPLES, seed) {
        Ok(s) => Ok(Some(s)),
        Err(brainsynth::Error::AllNan) => Ok(None),
        Err(e) => Err(CliError::from(e)),
    };
    Ok(LabelSummary {
        name,
        asd_missing: recs.iter().filter(|r| r.asd.is_nan()).count(),
        dsc: agg(recs.iter().map(|r| r.dsc).collect())?,
        asd_mm: agg(recs.iter().map(|r| r.asd).collect())?,
    })
}

pub fn evaluate(cfg: &PipelineConfig, a: &EvaluateArgs) -> CliResult<()> {
    let labels = if a.labels.trim() == "default" {
        metrics::default_eval_labels()
    } else {
        parse_label_list(&a.labels)?
    };
    let pairs = inputs::pair(&a.gt, &a.pred)?;
    let mut m = RunManifest::new("evaluate", cfg);
    let mut records: Vec<(String, MetricRecord)> = Vec::new();
    for (name, g, p) in &pairs {
        let gt = nifti::read_labels(g).data_err(format!("reading {}", g.display()))?;
        let pred = nifti::read_labels(p).data_err(format!("reading {}", p.display()))?;
        let recs = metrics::evaluate(&gt, &pred, &labels).data_err(format!("evaluating {name}"))?;
        records.extend(recs.into_iter().map(|r| (name.clone(), r)));
        m.input(g)?.input(p)?;
    }

    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        inputs::ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(&a.out).data_err(format!("cannot write {}", a.out.display()))?;
    for (subject, r) in &records {
        w.serialize(CsvRow {
            subject,
            label: r.label,
            dsc: r.dsc,
            asd_mm: r.asd,
        })
        .data_err("writing CSV")?;
    }
    w.flush().data_err("writing CSV")?;

    let all: Vec<&MetricRecord> = records.iter().map(|(_, r)| r).collect();
    let mut per_label = BTreeMap::new();
    for &l in &labels {
        let recs: Vec<&MetricRecord> = all.iter().copied().filter(|r| r.label == l).collect();
        let name = LabelTable.display_name(l).unwrap_or_else(|| format!("label {l}"));
        per_label.insert(l, summarize(name, &recs, cfg.seed)?);
    }
    let summary = EvaluationSummary {
        subjects: pairs.len(),
        bootstrap_seed: cfg.seed,
        bootstrap_resamples: metrics::BOOTSTRAP_RESAMPLES,
        overall: summarize("all labels".into(), &all, cfg.seed)?,
        labels: per_label,
    };
    let summary_path = a.summary.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
        parent_dir(&a.out).join(format!("{stem}_summary.json"))
    });
    write_json(&summary_path, &summary)?;

    m.arg("labels", &labels).output(&a.out).output(&summary_path);
    finish(&mut m, &parent_dir(&a.out))
}

#[derive(Deserialize)]
struct GroupRow {
    subject: String,
    group: String,
}

#[derive(Deserialize)]
struct TivRow {
    subject: String,
    tiv_mm3: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .data_err(format!("cannot read {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .data_err(format!("malformed {}", path.display()))
}

#[derive(Serialize)]
struct RoiTest {
    label: u16,
    name: String,
    n_a: usize,
    n_b: usize,
    median_a: f64,
    median_b: f64,
    result: GroupTestResult,
}

#[derive(Serialize)]
struct VolumetryReport {
    groups: [String; 2],
    alpha: f64,
    n_tests: usize,
    threshold: f64,
    tests: Vec<RoiTest>,
    records: Vec<RoiVolumeRecord>,
}

pub fn volumetry(cfg: &PipelineConfig, a: &VolumetryArgs) -> CliResult<()> {
    let rois = parse_label_list(&a.rois)?;
    if a.n_methods == 0 {
        return Err(CliError::usage("--n-methods must be at least 1"));
    }
    let n_tests = rois.len() * a.n_methods;
    let threshold = volumetry::bonferroni(a.alpha, n_tests).usage_err("invalid --alpha")?;

    let groups = read_csv::<GroupRow>(&a.groups)?;
    let tiv: BTreeMap<String, f64> = read_csv::<TivRow>(&a.tiv)?
        .into_iter()
        .map(|r| (r.subject, r.tiv_mm3))
        .collect();
    let names: BTreeSet<&str> = groups.iter().map(|g| g.group.as_str()).collect();
    if names.len() != 2 {
        return Err(CliError::data(format!(
            "expected exactly two groups, found {}",
            names.len()
        )));
    }
    let group_names: Vec<String> = names.into_iter().map(String::from).collect();
    let files = inputs::collect(&a.labels_dir)?;

    let mut m = RunManifest::new("volumetry", cfg);
    m.input(&a.groups)?.input(&a.tiv)?;
    let mut records = Vec::new();
    let mut subject_group = Vec::new();
    for g in &groups {
        let path = files
            .get(&g.subject)
            .ok_or_else(|| CliError::data(format!("no label map for subject {}", g.subject)))?;
        let t = *tiv
            .get(&g.subject)
            .ok_or_else(|| CliError::data(format!("no TIV for subject {}", g.subject)))?;
        let labels = nifti::read_labels(path).data_err(format!("reading {}", path.display()))?;
        m.input(path)?;
        for &l in &rois {
            records.push(
                RoiVolumeRecord::from_labels(&g.subject, &labels, l, t).data_err(format!("subject {}", g.subject))?,
            );
            subject_group.push(g.group == group_names[0]);
        }
    }

    let mut tests = Vec::new();
    for &l in &rois {
        let pick = |first: bool| -> Vec<f64> {
            records
                .iter()
                .zip(&subject_group)
                .filter(|(r, &in_a)| r.label == l && in_a == first)
                .map(|(r, _)| r.normalized)
                .collect()
        };
        let (va, vb) = (pick(true), pick(false));
        let result = volumetry::group_test(&va, &vb, a.alpha, n_tests).data_err(format!("ROI {l}"))?;
        tests.push(RoiTest {
            label: l,
            name: LabelTable.display_name(l).unwrap_or_else(|| format!("label {l}")),
            n_a: va.len(),
            n_b: vb.len(),
            median_a: metrics::median(&va).unwrap_or(f64::NAN),
            median_b: metrics::median(&vb).unwrap_or(f64::NAN),
            result,
        });
    }

    let report = VolumetryReport {
        groups: [group_names[0].clone(), group_names[1].clone()],
        alpha: a.alpha,
        n_tests,
        threshold,
        tests,
        records,
    };
    write_json(&a.out, &report)?;
    m.arg("rois", &rois)
        .arg("alpha", a.alpha)
        .arg("n_methods", a.n_methods)
        .output(&a.out);
    finish(&mut m, &parent_dir(&a.out))
}

fn read_subjects(path: &Path) -> CliResult<Vec<String>> {
    if path.is_dir() {
        return Ok(inputs::collect(path)?.into_keys().collect());
    }
    let text = std::fs::read_to_string(path).data_err(format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

#[derive(Serialize)]
struct FoldsReport<'a> {
    train_fraction: f64,
    #[serde(flatten)]
    assignment: &'a FoldAssignment,
}

pub fn split_folds(cfg: &PipelineConfig, a: &SplitFoldsArgs) -> CliResult<()> {
    let subjects = read_subjects(&a.subjects)?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = subjects.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(CliError::data(format!("duplicate subject {dup}")));
    }
    let k = a.k.unwrap_or(cfg.folds);
    let assignment = brainsynth::folds::split_folds(&subjects, k, cfg.seed)?;
    write_json(
        &a.out,
        &FoldsReport {
            train_fraction: cfg.train_fraction,
            assignment: &assignment,
        },
    )?;
    let mut m = RunManifest::new("split-folds", cfg);
    m.arg("k", k).arg("subjects", case_name(&a.subjects)).output(&a.out);
    if a.subjects.is_file() {
        m.input(&a.subjects)?;
    }
    finish(&mut m, &parent_dir(&a.out))
}
