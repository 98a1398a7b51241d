//! Pixel-level precision / recall / F1 over a manifest of image and
//! ground-truth mask pairs. Foreground pixels are the positive class.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::kmeans2_image;
use crate::error::{Error, Result};
use crate::image_io::{load_gray, load_mask, BinaryMask};
use crate::segmentation::{segment_image, SegmentationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<Confusion> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean; 0 when either input is 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision <= 0.0 || recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 from counts.
///
/// With no predicted positives precision is 1 if there were also no true
/// positives to find, else 0; recall mirrors this. An empty prediction on an
/// empty truth therefore scores 1 everywhere.
pub fn metrics(tp: u64, fp: u64, fn_: u64) -> MaskMetrics {
    let ratio = |num: u64, den: u64, other_empty: bool| {
        if den > 0 {
            num as f64 / den as f64
        } else if other_empty {
            1.0
        } else {
            0.0
        }
    };
    let precision = ratio(tp, tp + fp, tp + fn_ == 0);
    let recall = ratio(tp, tp + fn_, tp + fp == 0);
    MaskMetrics {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

impl From<Confusion> for MaskMetrics {
    fn from(c: Confusion) -> Self {
        metrics(c.tp, c.fp, c.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub image: String,
    pub mask: String,
    pub label: Option<String>,
}

/// Tab-separated `image<TAB>mask[<TAB>label]` lines; `#` starts a comment.
/// Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |message: &str| Error::Manifest {
                line: idx + 1,
                message: message.to_string(),
            };
            if !(2..=3).contains(&fields.len()) {
                return Err(bad("expected 2 or 3 tab-separated fields"));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(bad("empty path"));
            }
            entries.push(ManifestEntry {
                image: fields[0].to_string(),
                mask: fields[1].to_string(),
                label: fields
                    .get(2)
                    .filter(|l| !l.is_empty())
                    .map(|l| l.to_string()),
            });
        }
        Ok(Self {
            base_dir: base_dir.into(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        self.base_dir.join(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Kmeans2,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "kmeans2" => Ok(Method::Kmeans2),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub path: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EntryReport>,
    /// Metrics of the pooled counts.
    pub micro: MaskMetrics,
    /// Mean of the per-entry metrics.
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<EntryFailure>,
}

impl EvalReport {
    /// Build aggregates from per-entry results. Entries are sorted by path so
    /// the macro sums do not depend on evaluation order.
    pub fn from_entries(mut entries: Vec<EntryReport>, failures: Vec<EntryFailure>) -> Self {
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let pooled = entries.iter().fold(Confusion::default(), |acc, e| {
            acc + Confusion {
                tp: e.tp,
                fp: e.fp,
                fn_: e.fn_,
            }
        });
        let count = entries.len().max(1) as f64;
        let mean = |get: fn(&EntryReport) -> f64| entries.iter().map(get).sum::<f64>() / count;
        let macro_avg = MacroMetrics {
            precision: mean(|e| e.precision),
            recall: mean(|e| e.recall),
            f1: mean(|e| e.f1),
        };
        Self {
            micro: pooled.into(),
            macro_avg,
            entries,
            failures,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn predict(
    image: &Path,
    method: Method,
    cfg: &SegmentationConfig,
    seed: u64,
) -> Result<BinaryMask> {
    let img = load_gray(image)?;
    match method {
        Method::Proposed => segment_image(&img, cfg),
        Method::Kmeans2 => kmeans2_image(&img, cfg.block_size, seed),
    }
}

fn evaluate_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    method: Method,
    cfg: &SegmentationConfig,
    seed: u64,
) -> Result<EntryReport> {
    let truth = load_mask(manifest.resolve(&entry.mask))?;
    let pred = predict(&manifest.resolve(&entry.image), method, cfg, seed)?;
    let m = MaskMetrics::from(confusion(&pred, &truth)?);
    Ok(EntryReport {
        path: entry.image.clone(),
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
    })
}

/// Segment every manifest entry and score it against its mask. Entries that
/// fail to load or segment are listed in [`EvalReport::failures`] and left
/// out of the aggregates. An empty manifest is an error.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    method: Method,
    cfg: &SegmentationConfig,
    seed: u64,
) -> Result<EvalReport> {
    if manifest.entries.is_empty() {
        return Err(Error::InvalidArgument("manifest has no entries".into()));
    }
    cfg.validate()?;
    let results: Vec<(String, Result<EntryReport>)> = manifest
        .entries
        .par_iter()
        .map(|e| {
            (
                e.image.clone(),
                evaluate_entry(manifest, e, method, cfg, seed),
            )
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (path, r) in results {
        match r {
            Ok(e) => entries.push(e),
            Err(err) => failures.push(EntryFailure {
                path,
                error: err.to_string(),
            }),
        }
    }
    Ok(EvalReport::from_entries(entries, failures))
}
