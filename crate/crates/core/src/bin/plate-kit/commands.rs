use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;

use plate_kit::annotation::{
    build_index, check_lines, parse_detection_file, parse_label_file, probe_dimensions, Alphabet,
    DatasetIndex, DetectionRecord,
};
use plate_kit::detection_metrics::{evaluate_detection, DetectionEvalOptions, MetricsError, AP_THRESHOLDS};
use plate_kit::pseudo_label::{run_pseudo_label_pass, FilterPolicy, MergePolicy, PassConfig};
use plate_kit::recognition_metrics::{
    assemble_transcript, confusion_to_table, PlateTranscript, RecognitionAccumulator, RecognitionReport,
};
use plate_kit::synth::{
    builtin_glyphs, builtin_layouts, generate_dataset, load_glyph_dir, AugmentSpec, SynthConfig, SynthError,
    TextSource, MANIFEST_FILE,
};

use crate::args::{EvalDetArgs, EvalRecArgs, FilterArgs, MergeArgs, SynthArgs, ValidateArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Findings = 1,
    Usage = 2,
    Io = 3,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
}

type CmdResult = Result<Status, Failure>;

fn status_for(findings: usize) -> Status {
    if findings == 0 {
        Status::Ok
    } else {
        Status::Findings
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    let Some(path) = path else { return Ok(()) };
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct Finding {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    message: String,
}

#[derive(Debug, Serialize)]
struct ErrorReport {
    error: String,
}

#[derive(Debug, Default, Serialize)]
struct ValidateReport {
    label_files: usize,
    detection_files: usize,
    images: usize,
    findings: Vec<Finding>,
}

const IMAGE_EXTS: [&str; 4] = ["ppm", "pgm", "pbm", "png"];

pub fn validate(a: &ValidateArgs) -> CmdResult {
    let meta = fs::metadata(&a.root).map_err(|e| Failure::Io(format!("{}: {e}", a.root.display())))?;
    if meta.is_dir() {
        fs::read_dir(&a.root).map_err(|e| Failure::Io(format!("{}: {e}", a.root.display())))?;
    }

    let mut report = ValidateReport::default();
    for entry in WalkDir::new(&a.root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let file = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                report.findings.push(Finding {
                    file,
                    line: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let shown = path.strip_prefix(&a.root).unwrap_or(path);
        let shown = if shown.as_os_str().is_empty() { path } else { shown };
        let file = shown.display().to_string();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        if ext == "txt" {
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    report.findings.push(Finding {
                        file,
                        line: None,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            // The first non-blank line decides between label and detection files.
            let fields = text
                .lines()
                .map(|l| l.split_whitespace().count())
                .find(|&n| n > 0)
                .unwrap_or(5);
            let fields = if fields == 6 { 6 } else { 5 };
            if fields == 6 {
                report.detection_files += 1;
            } else {
                report.label_files += 1;
            }
            report.findings.extend(check_lines(&text, fields).into_iter().map(|e| Finding {
                file: file.clone(),
                line: Some(e.line),
                message: e.kind.to_string(),
            }));
        } else if IMAGE_EXTS.contains(&ext.as_str()) {
            report.images += 1;
            if let Err(message) = probe_dimensions(path) {
                report.findings.push(Finding {
                    file,
                    line: None,
                    message,
                });
            }
        }
    }

    for f in &report.findings {
        match f.line {
            Some(l) => println!("{}:{l}: {}", f.file, f.message),
            None => println!("{}: {}", f.file, f.message),
        }
    }
    println!(
        "checked {} label file(s), {} detection file(s), {} image(s): {} finding(s)",
        report.label_files,
        report.detection_files,
        report.images,
        report.findings.len()
    );
    write_json(a.report.as_deref(), &report)?;
    Ok(status_for(report.findings.len()))
}

fn index_images(dir: &Path, ext: &str, label_dir: &str) -> Result<DatasetIndex, Failure> {
    let index = build_index(dir, ext, label_dir).map_err(|e| Failure::Io(e.to_string()))?;
    for s in &index.skipped {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.reason);
    }
    Ok(index)
}

fn pseudo_label_pass(a: &FilterArgs, labels: Option<&Path>, precedence_iou: f64) -> CmdResult {
    let filter = FilterPolicy::new(
        a.min_confidence,
        a.suppression_iou,
        a.max_per_image.map(|n| n as usize),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let merge = MergePolicy::new(precedence_iou).map_err(|e| Failure::Usage(e.to_string()))?;

    let label_dir = match labels {
        Some(p) => {
            let abs = std::path::absolute(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            abs.to_str()
                .ok_or_else(|| Failure::Usage(format!("label path {} is not UTF-8", p.display())))?
                .to_string()
        }
        None => String::new(),
    };
    let index = index_images(&a.images, &a.image_ext, &label_dir)?;
    let config = PassConfig {
        filter,
        merge,
        use_human_labels: labels.is_some(),
    };
    let report = run_pseudo_label_pass(&index, &a.detections, &a.out, &config)
        .map_err(|e| Failure::Io(e.to_string()))?;

    for img in &report.images {
        if let Some(issue) = &img.issue {
            eprintln!("{}: {issue}", img.image_id);
        }
    }
    let t = &report.totals;
    println!(
        "images {} written {} skipped {}",
        report.images.len(),
        report.images_written,
        report.images_skipped
    );
    println!(
        "detections {} retained {} dropped {} (low confidence {}, suppressed {}, over limit {}, human overlap {})",
        t.input,
        t.retained,
        t.dropped(),
        t.dropped_low_confidence,
        t.dropped_suppressed,
        t.dropped_over_limit,
        t.dropped_conflict_with_human
    );
    if labels.is_some() {
        println!("human labels {}", t.human);
    }
    write_json(a.report.as_deref(), &report)?;
    let findings = index.skipped.len() + usize::from(report.has_issues());
    Ok(status_for(findings))
}

pub fn filter(a: &FilterArgs) -> CmdResult {
    pseudo_label_pass(a, None, MergePolicy::default().human_precedence_iou)
}

pub fn merge(a: &MergeArgs) -> CmdResult {
    pseudo_label_pass(&a.filter, Some(&a.labels), a.precedence_iou)
}

fn threshold_name(t: f64) -> String {
    let pct = (t * 100.0 * 1000.0).round() / 1000.0;
    format!("AP{pct}")
}

pub fn eval_det(a: &EvalDetArgs) -> CmdResult {
    let thresholds = if a.iou_thresholds.is_empty() {
        AP_THRESHOLDS.to_vec()
    } else {
        a.iou_thresholds.clone()
    };
    let index = index_images(&a.images, &a.image_ext, "")?;
    let options = DetectionEvalOptions {
        thresholds: thresholds.clone(),
        category: a.category,
    };
    let report = match evaluate_detection(&index, &a.detections, &a.labels, &options) {
        Ok(r) => r,
        Err(e @ MetricsError::UndefinedRecall) => {
            eprintln!("error: {e}");
            write_json(a.report.as_deref(), &ErrorReport { error: e.to_string() })?;
            return Ok(Status::Findings);
        }
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    for issue in &report.issues {
        eprintln!("{}: {}", issue.image_id, issue.message);
    }
    let mean_name = if thresholds == AP_THRESHOLDS { "AP50:95" } else { "mAP" };
    println!("{mean_name} {:.3}", report.ap_50_95);
    for (t, ap) in report.iou_thresholds.iter().zip(&report.ap) {
        println!("{} {ap:.3}", threshold_name(*t));
    }
    println!(
        "images {} ground truths {} detections {}",
        report.images, report.total_ground_truths, report.total_detections
    );
    write_json(a.report.as_deref(), &report)?;
    Ok(status_for(index.skipped.len() + report.issues.len()))
}

#[derive(Debug, Serialize)]
struct RecOutput<'a> {
    #[serde(flatten)]
    report: &'a RecognitionReport,
    issues: &'a [Finding],
}

fn stems(dir: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let read = fs::read_dir(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<(String, PathBuf)> = read
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
        .collect();
    out.sort();
    Ok(out)
}

/// Plates from per-plate character label and detection directories.
fn plates_from_dirs(
    labels: &Path,
    detections: &Path,
    alphabet: &Alphabet,
    row_gap_factor: f64,
    issues: &mut Vec<Finding>,
) -> Result<Vec<(String, PlateTranscript, PlateTranscript)>, Failure> {
    let mut plates = Vec::new();
    for (id, path) in stems(labels)? {
        let file = path.display().to_string();
        let truth = match fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| {
            parse_label_file(&t).map_err(|e| e.to_string())
        }) {
            Ok(labels) => {
                let dets: Vec<DetectionRecord> = labels.iter().map(|l| l.with_confidence(1.0)).collect();
                assemble_transcript(&dets, alphabet, row_gap_factor)
            }
            Err(message) => {
                issues.push(Finding { file, line: None, message });
                continue;
            }
        };
        let det_path = detections.join(format!("{id}.txt"));
        let pred = match fs::read_to_string(&det_path) {
            Ok(text) => match parse_detection_file(&text) {
                Ok(d) => assemble_transcript(&d, alphabet, row_gap_factor),
                Err(e) => {
                    issues.push(Finding {
                        file: det_path.display().to_string(),
                        line: Some(e.line),
                        message: e.kind.to_string(),
                    });
                    continue;
                }
            },
            Err(e) => {
                issues.push(Finding {
                    file: det_path.display().to_string(),
                    line: None,
                    message: format!("{e}; scored as an empty reading"),
                });
                PlateTranscript::default()
            }
        };
        plates.push((id, truth, pred));
    }
    Ok(plates)
}

fn read_transcripts(
    path: &Path,
    alphabet: &Alphabet,
    issues: &mut Vec<Finding>,
) -> Result<BTreeMap<String, PlateTranscript>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(id) = parts.next() else { continue };
        let body: String = parts.collect();
        let finding = |message: String| Finding {
            file: path.display().to_string(),
            line: Some(i + 1),
            message,
        };
        match PlateTranscript::new(&body, alphabet) {
            Ok(t) => {
                if out.insert(id.to_string(), t).is_some() {
                    issues.push(finding(format!("duplicate id {id:?}; last entry wins")));
                }
            }
            Err(e) => issues.push(finding(e.to_string())),
        }
    }
    Ok(out)
}

/// Plates from two transcript lists, paired by id.
fn plates_from_lists(
    truth: &Path,
    pred: &Path,
    alphabet: &Alphabet,
    issues: &mut Vec<Finding>,
) -> Result<Vec<(String, PlateTranscript, PlateTranscript)>, Failure> {
    let truths = read_transcripts(truth, alphabet, issues)?;
    let mut preds = read_transcripts(pred, alphabet, issues)?;
    let mut plates = Vec::with_capacity(truths.len());
    for (id, t) in truths {
        let p = preds.remove(&id).unwrap_or_else(|| {
            issues.push(Finding {
                file: pred.display().to_string(),
                line: None,
                message: format!("no reading for {id:?}; scored as empty"),
            });
            PlateTranscript::default()
        });
        plates.push((id, t, p));
    }
    for id in preds.keys() {
        issues.push(Finding {
            file: pred.display().to_string(),
            line: None,
            message: format!("reading for unknown plate {id:?} ignored"),
        });
    }
    Ok(plates)
}

pub fn eval_rec(a: &EvalRecArgs) -> CmdResult {
    let alphabet = Alphabet::new(&a.alphabet).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut issues = Vec::new();
    let plates = match (&a.labels, &a.detections, &a.truth, &a.pred) {
        (Some(l), Some(d), None, None) => plates_from_dirs(l, d, &alphabet, a.row_gap_factor, &mut issues)?,
        (None, None, Some(t), Some(p)) => plates_from_lists(t, p, &alphabet, &mut issues)?,
        _ => {
            return Err(Failure::Usage(
                "give either --labels with --detections or --truth with --pred".into(),
            ))
        }
    };
    for f in &issues {
        match f.line {
            Some(l) => eprintln!("{}:{l}: {}", f.file, f.message),
            None => eprintln!("{}: {}", f.file, f.message),
        }
    }

    let mut acc = RecognitionAccumulator::new(&alphabet);
    for (id, t, p) in &plates {
        acc.add(id.clone(), t, p).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let report = match acc.finish() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            write_json(a.report.as_deref(), &ErrorReport { error: e.to_string() })?;
            return Ok(Status::Findings);
        }
    };
    println!("CER {:.3}", report.cer);
    println!("Recall {:.3}", report.char_recall);
    println!("Exact {:.3}", report.exact_match_rate);
    println!(
        "plates {} characters {} edits {} (substitutions {}, deletions {}, insertions {})",
        report.plates,
        report.truth_chars,
        report.total_distance,
        report.counts.substitutions,
        report.counts.deletions,
        report.counts.insertions
    );
    for c in report.top_confusions.iter().take(5) {
        let show = |x: Option<char>| x.map_or_else(|| plate_kit::recognition_metrics::ABSENT.to_string(), String::from);
        println!("  {} -> {}: {}", show(c.truth), show(c.pred), c.count);
    }
    write_json(
        a.report.as_deref(),
        &RecOutput {
            report: &report,
            issues: &issues,
        },
    )?;
    if let Some(path) = &a.confusion {
        fs::write(path, confusion_to_table(&report.confusion))
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(status_for(issues.len()))
}

fn synth_failure(e: SynthError) -> Failure {
    match e {
        SynthError::Io { .. } | SynthError::Ppm { .. } => Failure::Io(e.to_string()),
        SynthError::Item { ref source, .. } if matches!(**source, SynthError::Io { .. }) => {
            Failure::Io(e.to_string())
        }
        other => Failure::Usage(other.to_string()),
    }
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let alphabet = Alphabet::default();
    let glyphs = match &a.glyphs {
        Some(dir) => load_glyph_dir(dir, &alphabet).map_err(synth_failure)?,
        None => builtin_glyphs(a.glyph_cell),
    };
    let augment = if a.no_augment {
        AugmentSpec::identity(a.seed)
    } else {
        AugmentSpec {
            max_rotation_deg: a.max_rotation,
            perspective_jitter: a.perspective,
            gain_range: (a.gain_min, a.gain_max),
            bias_range: (a.bias_min, a.bias_max),
            seed: a.seed,
            ..AugmentSpec::default()
        }
    };
    let config = SynthConfig {
        count: a.count,
        layouts: builtin_layouts(),
        text: TextSource::Random {
            min_len: a.min_len,
            max_len: a.max_len,
            charset: glyphs.keys().copied().collect(),
        },
        glyphs,
        alphabet,
        augment,
    };
    let manifest = generate_dataset(&config, &a.out, !a.sequential).map_err(synth_failure)?;
    println!(
        "wrote {} plate(s); manifest {}",
        manifest.entries.len(),
        a.out.join(MANIFEST_FILE).display()
    );
    Ok(Status::Ok)
}
