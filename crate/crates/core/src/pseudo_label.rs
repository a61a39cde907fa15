//! Pseudo-label filtering and merging.
//!
//! Raw detector output is turned into training labels in three steps:
//! a confidence gate, greedy same-category suppression, and an optional
//! per-image cap. The survivors are then merged with human labels, which
//! always win: a pseudo box overlapping a same-category human box at or above
//! `human_precedence_iou` is dropped.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    parse_detection_file, parse_label_file, write_label_file, DatasetIndex, DetectionRecord,
    IndexEntry, LabelRecord,
};
use crate::geometry::iou;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("{name} must be in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("max_per_image must be positive")]
    ZeroCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub min_confidence: f64,
    pub suppression_iou: f64,
    /// `None` keeps every surviving detection.
    pub max_per_image: Option<usize>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_confidence: 0.35,
            suppression_iou: 0.5,
            max_per_image: None,
        }
    }
}

impl FilterPolicy {
    pub fn new(
        min_confidence: f64,
        suppression_iou: f64,
        max_per_image: Option<usize>,
    ) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&min_confidence) {
            return Err(PolicyError::OutOfRange {
                name: "min_confidence",
                range: "[0, 1]",
                value: min_confidence,
            });
        }
        check_open_unit("suppression_iou", suppression_iou)?;
        if max_per_image == Some(0) {
            return Err(PolicyError::ZeroCap);
        }
        Ok(Self {
            min_confidence,
            suppression_iou,
            max_per_image,
        })
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<(), PolicyError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(PolicyError::OutOfRange {
            name,
            range: "(0, 1]",
            value,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergePolicy {
    pub human_precedence_iou: f64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        Self {
            human_precedence_iou: 0.5,
        }
    }
}

impl MergePolicy {
    pub fn new(human_precedence_iou: f64) -> Result<Self, PolicyError> {
        check_open_unit("human_precedence_iou", human_precedence_iou)?;
        Ok(Self {
            human_precedence_iou,
        })
    }
}

/// Survivors of [`filter_detections_counted`] and why the rest were dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<LabelRecord>,
    pub dropped_low_confidence: usize,
    pub dropped_suppressed: usize,
    pub dropped_over_limit: usize,
}

pub fn filter_detections(
    dets: &[DetectionRecord],
    policy: &FilterPolicy,
    width: u32,
    height: u32,
) -> Vec<LabelRecord> {
    filter_detections_counted(dets, policy, width, height).kept
}

pub fn filter_detections_counted(
    dets: &[DetectionRecord],
    policy: &FilterPolicy,
    width: u32,
    height: u32,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    let mut ranked: Vec<&DetectionRecord> = dets
        .iter()
        .filter(|d| d.confidence >= policy.min_confidence)
        .collect();
    out.dropped_low_confidence = dets.len() - ranked.len();
    // Stable: equal confidences keep file order.
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut kept: Vec<&DetectionRecord> = Vec::with_capacity(ranked.len());
    for d in ranked {
        let pb = d.bbox.to_pixel(width, height);
        let overlaps = kept.iter().any(|k| {
            k.category == d.category && iou(&k.bbox.to_pixel(width, height), &pb) >= policy.suppression_iou
        });
        if overlaps {
            out.dropped_suppressed += 1;
        } else {
            kept.push(d);
        }
    }
    if let Some(cap) = policy.max_per_image {
        if kept.len() > cap {
            out.dropped_over_limit = kept.len() - cap;
            kept.truncate(cap);
        }
    }
    out.kept = kept.into_iter().map(DetectionRecord::label).collect();
    out
}

/// Human labels first and verbatim, then non-conflicting pseudo labels in
/// input order. The second value counts pseudo labels dropped for conflict.
pub fn merge_labels_counted(
    human: &[LabelRecord],
    pseudo: &[LabelRecord],
    policy: &MergePolicy,
    width: u32,
    height: u32,
) -> (Vec<LabelRecord>, usize) {
    let human_px: Vec<_> = human
        .iter()
        .map(|h| (h.category, h.bbox.to_pixel(width, height)))
        .collect();
    let mut merged = human.to_vec();
    let mut conflicts = 0;
    for p in pseudo {
        let pb = p.bbox.to_pixel(width, height);
        let conflict = human_px
            .iter()
            .any(|(c, hb)| *c == p.category && iou(hb, &pb) >= policy.human_precedence_iou);
        if conflict {
            conflicts += 1;
        } else {
            merged.push(*p);
        }
    }
    (merged, conflicts)
}

pub fn merge_labels(
    human: &[LabelRecord],
    pseudo: &[LabelRecord],
    policy: &MergePolicy,
    width: u32,
    height: u32,
) -> Vec<LabelRecord> {
    merge_labels_counted(human, pseudo, policy, width, height).0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelCounts {
    pub input: usize,
    pub dropped_low_confidence: usize,
    pub dropped_suppressed: usize,
    pub dropped_over_limit: usize,
    pub dropped_conflict_with_human: usize,
    pub retained: usize,
    /// Human labels carried over verbatim; not part of the conservation sum.
    pub human: usize,
}

impl PseudoLabelCounts {
    pub fn dropped(&self) -> usize {
        self.dropped_low_confidence
            + self.dropped_suppressed
            + self.dropped_over_limit
            + self.dropped_conflict_with_human
    }

    /// `input == retained + dropped`.
    pub fn is_conserved(&self) -> bool {
        self.input == self.retained + self.dropped()
    }

    pub fn add(&mut self, o: &Self) {
        self.input += o.input;
        self.dropped_low_confidence += o.dropped_low_confidence;
        self.dropped_suppressed += o.dropped_suppressed;
        self.dropped_over_limit += o.dropped_over_limit;
        self.dropped_conflict_with_human += o.dropped_conflict_with_human;
        self.retained += o.retained;
        self.human += o.human;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Written,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub status: ImageStatus,
    pub counts: PseudoLabelCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub issue: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelReport {
    pub images: Vec<ImageReport>,
    pub totals: PseudoLabelCounts,
    pub images_written: usize,
    pub images_skipped: usize,
}

impl PseudoLabelReport {
    pub fn is_conserved(&self) -> bool {
        self.totals.is_conserved() && self.images.iter().all(|i| i.counts.is_conserved())
    }

    pub fn has_issues(&self) -> bool {
        self.images.iter().any(|i| i.issue.is_some())
    }

    fn from_images(images: Vec<ImageReport>) -> Self {
        let mut totals = PseudoLabelCounts::default();
        for i in &images {
            totals.add(&i.counts);
        }
        let images_written = images.iter().filter(|i| i.status == ImageStatus::Written).count();
        Self {
            images_skipped: images.len() - images_written,
            images,
            totals,
            images_written,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PassConfig {
    pub filter: FilterPolicy,
    pub merge: MergePolicy,
    /// When false, human label files are ignored and only filtered pseudo
    /// labels are written.
    pub use_human_labels: bool,
}

/// Processes one image; failures become a skipped entry with an issue.
fn process_image(
    entry: &IndexEntry,
    detections_root: &Path,
    out_dir: &Path,
    config: &PassConfig,
) -> ImageReport {
    let skip = |issue: String, counts: PseudoLabelCounts| ImageReport {
        image_id: entry.image_id.clone(),
        status: ImageStatus::Skipped,
        counts,
        output: None,
        issue: Some(issue),
    };

    let human = match (&entry.label_path, config.use_human_labels) {
        (Some(path), true) => {
            match fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|t| parse_label_file(&t).map_err(|e| e.to_string()))
            {
                Ok(h) => Some(h),
                Err(e) => return skip(format!("{}: {e}", path.display()), Default::default()),
            }
        }
        _ => None,
    };

    let det_path = detections_root.join(format!("{}.txt", entry.image_id));
    let dets = match fs::read_to_string(&det_path) {
        Ok(text) => match parse_detection_file(&text) {
            Ok(d) => d,
            Err(e) => return skip(format!("{}: {e}", det_path.display()), Default::default()),
        },
        Err(_) if human.is_some() => Vec::new(),
        Err(e) => {
            return skip(
                format!("missing detection file {}: {e}", det_path.display()),
                Default::default(),
            )
        }
    };

    let filtered = filter_detections_counted(&dets, &config.filter, entry.width, entry.height);
    let human = human.unwrap_or_default();
    let (merged, conflicts) =
        merge_labels_counted(&human, &filtered.kept, &config.merge, entry.width, entry.height);
    let counts = PseudoLabelCounts {
        input: dets.len(),
        dropped_low_confidence: filtered.dropped_low_confidence,
        dropped_suppressed: filtered.dropped_suppressed,
        dropped_over_limit: filtered.dropped_over_limit,
        dropped_conflict_with_human: conflicts,
        retained: filtered.kept.len() - conflicts,
        human: human.len(),
    };

    let out_path = out_dir.join(format!("{}.txt", entry.image_id));
    if let Err(e) = fs::write(&out_path, write_label_file(&merged)) {
        return skip(format!("cannot write {}: {e}", out_path.display()), counts);
    }
    ImageReport {
        image_id: entry.image_id.clone(),
        status: ImageStatus::Written,
        counts,
        output: Some(out_path),
        issue: None,
    }
}

#[derive(Debug, Error)]
#[error("cannot create output directory {path}: {source}")]
pub struct PassError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Filters and merges every image in `index`, writing one label file per
/// image into `out_dir`.
///
/// Detection files are read from `detections_root/<image_id>.txt`. An image
/// without a detection file is skipped unless it has human labels, in which
/// case those are written verbatim.
pub fn run_pseudo_label_pass(
    index: &DatasetIndex,
    detections_root: &Path,
    out_dir: &Path,
    config: &PassConfig,
) -> Result<PseudoLabelReport, PassError> {
    fs::create_dir_all(out_dir).map_err(|source| PassError {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let run = |e: &IndexEntry| process_image(e, detections_root, out_dir, config);

    #[cfg(feature = "parallel")]
    let images: Vec<ImageReport> = {
        use rayon::prelude::*;
        index.entries.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let images: Vec<ImageReport> = index.entries.iter().map(run).collect();

    Ok(PseudoLabelReport::from_images(images))
}
