//! Detection evaluation: greedy IoU matching, precision-recall sweeps and
//! 101-point interpolated average precision over IoU thresholds
//! 0.50, 0.55, ..., 0.95.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{parse_detection_file, parse_label_file, DatasetIndex};
use crate::geometry::{iou, BoxPixel};

/// The ten thresholds averaged into AP50:95.
pub const AP_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];
/// Recall levels sampled by the interpolated AP are `i / 100` for `i` in `0..=100`.
pub const RECALL_LEVELS: usize = 101;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("recall is undefined: no ground-truth boxes")]
    UndefinedRecall,
    #[error("invalid IoU threshold {0}: must be in (0, 1]")]
    BadThreshold(f64),
    #[error("no IoU thresholds given")]
    NoThresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub confidence: f64,
    pub bbox: BoxPixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub image_id: String,
    /// Position of the detection in its input list.
    pub input_index: usize,
    pub confidence: f64,
    pub matched_gt: Option<usize>,
}

impl DetectionMatch {
    pub fn is_true_positive(&self) -> bool {
        self.matched_gt.is_some()
    }
}

/// Matches of one image at one threshold, in processing order
/// (descending confidence, ties by input order).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matches: Vec<DetectionMatch>,
}

impl MatchOutcome {
    pub fn true_positives(&self) -> usize {
        self.matches.iter().filter(|m| m.is_true_positive()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.matches.len() - self.true_positives()
    }
}

fn by_confidence_desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Greedy matching: each detection, highest confidence first, takes the
/// still-unmatched ground truth with the largest IoU if that IoU reaches
/// `threshold` (ties go to the lowest ground-truth index).
pub fn match_image(image_id: &str, dets: &[ScoredBox], gts: &[BoxPixel], threshold: f64) -> MatchOutcome {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| by_confidence_desc(dets[a].confidence, dets[b].confidence));

    let mut taken = vec![false; gts.len()];
    let matches = order
        .into_iter()
        .map(|di| {
            let d = &dets[di];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let v = iou(&d.bbox, g);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            if let Some((gi, _)) = best {
                taken[gi] = true;
            }
            DetectionMatch {
                image_id: image_id.to_string(),
                input_index: di,
                confidence: d.confidence,
                matched_gt: best.map(|(gi, _)| gi),
            }
        })
        .collect();
    MatchOutcome { matches }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// One point per ranked detection; recall is non-decreasing along the curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Pools outcomes from every image, ranks them globally (confidence
/// descending, then image id, then input order) and accumulates TP/FP.
pub fn precision_recall(outcomes: &[MatchOutcome], total_gt: usize) -> Result<PrCurve, MetricsError> {
    if total_gt == 0 {
        return Err(MetricsError::UndefinedRecall);
    }
    let mut pooled: Vec<&DetectionMatch> = outcomes.iter().flat_map(|o| &o.matches).collect();
    pooled.sort_by(|a, b| {
        by_confidence_desc(a.confidence, b.confidence)
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then_with(|| a.input_index.cmp(&b.input_index))
    });
    let mut tp = 0usize;
    let points = pooled
        .iter()
        .enumerate()
        .map(|(k, m)| {
            tp += usize::from(m.is_true_positive());
            PrPoint {
                recall: tp as f64 / total_gt as f64,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect();
    Ok(PrCurve { points })
}

/// 101-point interpolated AP: the mean over recall levels `r = i/100` of the
/// best precision among points with recall at least `r` (0 if none).
pub fn average_precision(curve: &PrCurve) -> f64 {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    // Best precision at or after each position.
    let mut envelope = vec![0.0; pts.len()];
    let mut best = 0.0_f64;
    for (i, p) in pts.iter().enumerate().rev() {
        best = best.max(p.precision);
        envelope[i] = best;
    }
    let mut sum = 0.0;
    let mut cursor = 0;
    for i in 0..RECALL_LEVELS {
        let r = i as f64 / 100.0;
        while cursor < pts.len() && pts[cursor].recall < r {
            cursor += 1;
        }
        if cursor < pts.len() {
            sum += envelope[cursor];
        }
    }
    sum / RECALL_LEVELS as f64
}

/// Boxes of one image, with category ids. Matching is category-aware.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageBoxes {
    pub image_id: String,
    pub detections: Vec<(u32, ScoredBox)>,
    pub ground_truths: Vec<(u32, BoxPixel)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalIssue {
    pub image_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub iou_thresholds: Vec<f64>,
    pub ap: Vec<f64>,
    /// Mean of `ap` over all thresholds.
    pub ap_50_95: f64,
    pub recall_50: f64,
    pub total_ground_truths: usize,
    pub total_detections: usize,
    pub images: usize,
    pub issues: Vec<EvalIssue>,
}

impl ApReport {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.iou_thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-12)
            .map(|i| self.ap[i])
    }
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<(), MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::NoThresholds);
    }
    match thresholds.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        Some(&t) => Err(MetricsError::BadThreshold(t)),
        None => Ok(()),
    }
}

fn match_all(images: &[ImageBoxes], threshold: f64) -> Vec<MatchOutcome> {
    let one = |img: &ImageBoxes| {
        let mut cats: Vec<u32> = img
            .detections
            .iter()
            .map(|d| d.0)
            .chain(img.ground_truths.iter().map(|g| g.0))
            .collect();
        cats.sort_unstable();
        cats.dedup();
        let mut merged = MatchOutcome::default();
        for c in cats {
            let idx: Vec<usize> = (0..img.detections.len())
                .filter(|&i| img.detections[i].0 == c)
                .collect();
            let dets: Vec<ScoredBox> = idx.iter().map(|&i| img.detections[i].1).collect();
            let gts: Vec<BoxPixel> = img
                .ground_truths
                .iter()
                .filter(|g| g.0 == c)
                .map(|g| g.1)
                .collect();
            let mut out = match_image(&img.image_id, &dets, &gts, threshold);
            // Report positions in the image's full detection list.
            for m in &mut out.matches {
                m.input_index = idx[m.input_index];
            }
            merged.matches.extend(out.matches);
        }
        merged
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        images.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        images.iter().map(one).collect()
    }
}

/// AP at each threshold, their mean, and recall at IoU 0.50.
pub fn evaluate_images(images: &[ImageBoxes], thresholds: &[f64]) -> Result<ApReport, MetricsError> {
    check_thresholds(thresholds)?;
    let total_gt: usize = images.iter().map(|i| i.ground_truths.len()).sum();
    if total_gt == 0 {
        return Err(MetricsError::UndefinedRecall);
    }
    let ap = thresholds
        .iter()
        .map(|&t| precision_recall(&match_all(images, t), total_gt).map(|c| average_precision(&c)))
        .collect::<Result<Vec<_>, _>>()?;
    let tp_50: usize = match_all(images, 0.5).iter().map(MatchOutcome::true_positives).sum();
    Ok(ApReport {
        ap_50_95: ap.iter().sum::<f64>() / ap.len() as f64,
        iou_thresholds: thresholds.to_vec(),
        ap,
        recall_50: tp_50 as f64 / total_gt as f64,
        total_ground_truths: total_gt,
        total_detections: images.iter().map(|i| i.detections.len()).sum(),
        images: images.len(),
        issues: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvalOptions {
    pub thresholds: Vec<f64>,
    /// Restrict both sides to one category; `None` evaluates all of them.
    pub category: Option<u32>,
}

impl Default for DetectionEvalOptions {
    fn default() -> Self {
        Self {
            thresholds: AP_THRESHOLDS.to_vec(),
            category: None,
        }
    }
}

fn read_file(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Loads `<id>.txt` pairs from the two roots for every indexed image and
/// evaluates them. An image without a label file is skipped; an image
/// without a detection file counts its ground truths as missed. Both cases
/// are listed in `issues`.
pub fn evaluate_detection(
    index: &DatasetIndex,
    detections_root: &Path,
    labels_root: &Path,
    options: &DetectionEvalOptions,
) -> Result<ApReport, MetricsError> {
    check_thresholds(&options.thresholds)?;
    let keep = |c: u32| options.category.is_none_or(|k| k == c);
    let mut images = Vec::with_capacity(index.len());
    let mut issues = Vec::new();
    for e in &index.entries {
        let issue = |message: String| EvalIssue {
            image_id: e.image_id.clone(),
            message,
        };
        let label_path: PathBuf = labels_root.join(format!("{}.txt", e.image_id));
        let gts = match read_file(&label_path)
            .and_then(|t| parse_label_file(&t).map_err(|err| format!("{}: {err}", label_path.display())))
        {
            Ok(g) => g,
            Err(msg) => {
                issues.push(issue(msg));
                continue;
            }
        };
        let det_path = detections_root.join(format!("{}.txt", e.image_id));
        let dets = match read_file(&det_path)
            .and_then(|t| parse_detection_file(&t).map_err(|err| format!("{}: {err}", det_path.display())))
        {
            Ok(d) => d,
            Err(msg) => {
                issues.push(issue(msg));
                Vec::new()
            }
        };
        images.push(ImageBoxes {
            image_id: e.image_id.clone(),
            detections: dets
                .iter()
                .filter(|d| keep(d.category))
                .map(|d| {
                    (
                        d.category,
                        ScoredBox {
                            confidence: d.confidence,
                            bbox: d.bbox.to_pixel(e.width, e.height),
                        },
                    )
                })
                .collect(),
            ground_truths: gts
                .iter()
                .filter(|g| keep(g.category))
                .map(|g| (g.category, g.bbox.to_pixel(e.width, e.height)))
                .collect(),
        });
    }
    let mut report = evaluate_images(&images, &options.thresholds)?;
    report.issues = issues;
    Ok(report)
}
