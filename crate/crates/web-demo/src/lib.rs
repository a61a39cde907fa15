//! Browser bindings for three plate-kit operations: rendering a synthetic
//! plate with its labels, aligning a reading against the truth, and the AP
//! staircase of a shifted detection.
//!
//! Results cross the boundary as JSON strings or byte buffers so the same
//! functions can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use plate_kit::annotation::Alphabet;
use plate_kit::detection_metrics::{evaluate_images, ImageBoxes, ScoredBox, AP_THRESHOLDS};
use plate_kit::geometry::{iou, BoxPixel};
use plate_kit::recognition_metrics::{edit_alignment, evaluate_recognition, EditOp, PlateTranscript, ABSENT};
use plate_kit::synth::{builtin_glyphs, builtin_layouts, render_item, AugmentSpec, SynthConfig, TextSource};

#[derive(Serialize)]
struct LabelBox {
    character: Option<char>,
    category: u32,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

/// A rendered plate: RGBA pixels plus labels in pixel coordinates.
#[derive(Debug)]
#[wasm_bindgen]
pub struct RenderedPlate {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
    labels: String,
    params: String,
}

#[wasm_bindgen]
impl RenderedPlate {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// JSON array of `{character, category, x_min, y_min, x_max, y_max}`;
    /// the plate box has no character.
    pub fn labels_json(&self) -> String {
        self.labels.clone()
    }

    /// JSON of the drawn augmentation parameters.
    pub fn params_json(&self) -> String {
        self.params.clone()
    }
}

/// Renders `text` the way the dataset generator would for `seed`.
#[wasm_bindgen]
pub fn render_plate(text: &str, seed: u32, augment: bool) -> Result<RenderedPlate, String> {
    let alphabet = Alphabet::default();
    let text = text.trim().to_uppercase();
    if let Some(c) = text.chars().find(|c| !alphabet.contains(*c)) {
        return Err(format!("{c:?} is not a plate character (0-9, A-Z)"));
    }
    let seed = u64::from(seed);
    let config = SynthConfig {
        count: 1,
        layouts: builtin_layouts(),
        glyphs: builtin_glyphs(4),
        text: TextSource::Choices(vec![text]),
        alphabet: alphabet.clone(),
        augment: if augment {
            AugmentSpec {
                seed,
                ..AugmentSpec::default()
            }
        } else {
            AugmentSpec::identity(seed)
        },
    };
    let (entry, plate) = render_item(&config, 0).map_err(|e| e.to_string())?;
    let (w, h) = (plate.image.width(), plate.image.height());
    let labels: Vec<LabelBox> = plate
        .labels
        .iter()
        .map(|l| {
            let b = l.bbox.to_pixel(w, h);
            LabelBox {
                character: alphabet.char_at(l.category),
                category: l.category,
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
            }
        })
        .collect();
    Ok(RenderedPlate {
        width: w,
        height: h,
        rgba: plate.image.to_rgba(),
        labels: serde_json::to_string(&labels).expect("labels serialize"),
        params: serde_json::to_string(&serde_json::json!({
            "layout": entry.layout,
            "params": entry.params,
        }))
        .expect("params serialize"),
    })
}

#[derive(Serialize)]
struct AlignmentView {
    distance: usize,
    cer: f64,
    char_recall: f64,
    ops: Vec<EditOp>,
    confusions: Vec<(String, String, u64)>,
}

/// Aligns a reading against the truth: distance, CER, recall, per-position
/// operations and the non-zero off-diagonal confusion cells.
#[wasm_bindgen]
pub fn align(truth: &str, pred: &str) -> Result<String, String> {
    let alphabet = Alphabet::default();
    let t = PlateTranscript::new(&truth.trim().to_uppercase(), &alphabet).map_err(|e| e.to_string())?;
    let p = PlateTranscript::new(&pred.trim().to_uppercase(), &alphabet).map_err(|e| e.to_string())?;
    let report = evaluate_recognition(&[(t, p)], &alphabet).map_err(|e| e.to_string())?;
    let detail = &report.details[0];
    let (_, alignment) = edit_alignment(detail.truth.chars(), detail.pred.chars());
    let show = |c: Option<char>| c.map_or_else(|| ABSENT.to_string(), String::from);
    let view = AlignmentView {
        distance: detail.distance,
        cer: report.cer,
        char_recall: report.char_recall,
        ops: alignment.ops,
        confusions: report
            .top_confusions
            .iter()
            .map(|c| (show(c.truth), show(c.pred), c.count))
            .collect(),
    };
    Ok(serde_json::to_string(&view).expect("alignment serializes"))
}

#[derive(Serialize)]
struct StaircaseView {
    iou: f64,
    thresholds: Vec<f64>,
    ap: Vec<f64>,
    ap_50_95: f64,
    truth: [f64; 4],
    detection: [f64; 4],
}

/// A 100x60 ground-truth box and one detection shifted right by `shift`
/// pixels and down by `drop`: their IoU and AP at each threshold.
#[wasm_bindgen]
pub fn staircase(shift: f64, drop: f64) -> Result<String, String> {
    if !(shift.is_finite() && drop.is_finite()) {
        return Err("shift must be finite".into());
    }
    let gt = BoxPixel::new(40.0, 30.0, 140.0, 90.0);
    let det = gt.translate(shift, drop);
    let image = ImageBoxes {
        image_id: "demo".into(),
        detections: vec![(
            0,
            ScoredBox {
                confidence: 0.9,
                bbox: det,
            },
        )],
        ground_truths: vec![(0, gt)],
    };
    let report = evaluate_images(&[image], &AP_THRESHOLDS).map_err(|e| e.to_string())?;
    let corners = |b: &BoxPixel| [b.x_min, b.y_min, b.x_max, b.y_max];
    let view = StaircaseView {
        iou: iou(&gt, &det),
        thresholds: report.iou_thresholds,
        ap: report.ap,
        ap_50_95: report.ap_50_95,
        truth: corners(&gt),
        detection: corners(&det),
    };
    Ok(serde_json::to_string(&view).expect("staircase serializes"))
}
