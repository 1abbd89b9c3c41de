use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::FeatureStore;
use crate::annotation::MultiF0Annotation;
use crate::decoder::{optimize_threshold, threshold_decode, DecoderConfig};
use crate::error::{Error, Result};
use crate::grid::HcqtParams;
use crate::metrics::{aggregate, align_to_grid, frame_scores, EvalScores, ScoreSummary};
use crate::nn::SalienceModel;

/// An annotated recording to evaluate on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalFile {
    pub id: String,
    pub audio: PathBuf,
    pub annotation: PathBuf,
}

/// Model output for one file next to its reference on the same frame grid.
#[derive(Debug, Clone)]
pub struct SalienceItem {
    pub id: String,
    pub salience: Array2<f32>,
    pub reference: MultiF0Annotation,
}

pub fn predict_items(model: &SalienceModel, store: &FeatureStore, files: &[EvalFile]) -> Result<Vec<SalienceItem>> {
    files
        .iter()
        .map(|f| {
            let features = store.features(&f.audio)?;
            let reference = store.reference(&f.annotation, &features)?;
            Ok(SalienceItem {
                id: f.id.clone(),
                salience: model.predict(&features)?,
                reference,
            })
        })
        .collect()
}

/// Threshold maximizing mean accuracy over the items.
pub fn tune_threshold(items: &[SalienceItem], params: &HcqtParams) -> Result<f32> {
    if items.is_empty() {
        return Err(Error::Config("threshold tuning needs at least one validation file".into()));
    }
    let pairs: Vec<_> = items.iter().map(|i| (i.salience.clone(), i.reference.clone())).collect();
    Ok(optimize_threshold(&pairs, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileScores {
    pub id: String,
    /// One entry per tolerance, in the order requested.
    pub scores: Vec<EvalScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub name: String,
    /// Decoding threshold, when the estimates came from salience maps.
    pub threshold: Option<f32>,
    pub files: Vec<FileScores>,
    /// One entry per tolerance.
    pub summary: Vec<ScoreSummary>,
}

impl Evaluation {
    pub fn summary_at(&self, tolerance_cents: f64) -> Option<&ScoreSummary> {
        self.summary.iter().find(|s| s.tolerance_cents == tolerance_cents)
    }
}

/// Scores pairs of `(id, reference, estimate)` at each tolerance. Estimates are moved onto
/// the reference grid first.
pub fn score_pairs<'a>(
    name: &str,
    threshold: Option<f32>,
    pairs: impl IntoIterator<Item = (&'a str, &'a MultiF0Annotation, MultiF0Annotation)>,
    tolerances: &[f64],
) -> Result<Evaluation> {
    let mut files = Vec::new();
    for (id, reference, estimate) in pairs {
        let estimate = align_to_grid(&estimate, &reference.frame_times)?;
        let scores = tolerances
            .iter()
            .map(|&tol| frame_scores(reference, &estimate, tol))
            .collect::<Result<Vec<_>>>()?;
        files.push(FileScores { id: id.to_string(), scores });
    }
    let summary = (0..tolerances.len())
        .map(|i| aggregate(&files.iter().map(|f| f.scores[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        name: name.to_string(),
        threshold,
        files,
        summary,
    })
}

/// Decodes every item at `threshold` and scores it.
pub fn evaluate_items(
    name: &str,
    items: &[SalienceItem],
    params: &HcqtParams,
    threshold: f32,
    tolerances: &[f64],
) -> Result<Evaluation> {
    let cfg = DecoderConfig { threshold };
    score_pairs(
        name,
        Some(threshold),
        items
            .iter()
            .map(|i| (i.id.as_str(), &i.reference, threshold_decode(&i.salience, params, &cfg))),
        tolerances,
    )
}

/// Collects `<name>.wav` files that have a `<name>.txt` (or `.tsv`) multi-F0 annotation beside
/// them, sorted by name.
pub fn discover_annotated_audio(dir: &Path) -> Result<Vec<EvalFile>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_none_or(|e| !e.eq_ignore_ascii_case("wav")) {
            continue;
        }
        let annotation = ["txt", "tsv"].iter().map(|e| path.with_extension(e)).find(|p| p.exists());
        match annotation {
            Some(annotation) => out.push(EvalFile {
                id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                audio: path,
                annotation,
            }),
            None => log::warn!("{}: no annotation beside it; skipped", path.display()),
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

fn annotation_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "txt" || e == "tsv") {
            out.push((path.file_stem().unwrap_or_default().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

/// Scores estimate annotation files against references. `reference` and `estimate` are
/// either two files or two directories whose files are paired by name; a reference without
/// an estimate is an error.
pub fn score_paths(reference: &Path, estimate: &Path, tolerances: &[f64]) -> Result<Evaluation> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if reference.is_dir() {
        let ests: std::collections::BTreeMap<String, PathBuf> = annotation_files(estimate)?.into_iter().collect();
        annotation_files(reference)?
            .into_iter()
            .map(|(id, r)| match ests.get(&id) {
                Some(e) => Ok((id, r, e.clone())),
                None => Err(Error::Dataset(format!("no estimate for reference '{id}' in {}", estimate.display()))),
            })
            .collect::<Result<_>>()?
    } else {
        let id = reference.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        vec![(id, reference.to_path_buf(), estimate.to_path_buf())]
    };
    let loaded = pairs
        .iter()
        .map(|(id, r, e)| Ok((id.as_str(), MultiF0Annotation::read(r)?, MultiF0Annotation::read(e)?)))
        .collect::<Result<Vec<_>>>()?;
    score_pairs("score", None, loaded.iter().map(|(id, r, e)| (*id, r, e.clone())), tolerances)
}
