//! Seeded generation of labeled synthetic plate datasets.
//!
//! Every item draws from its own generator, seeded from `(seed, index)`, so
//! output does not depend on generation order or worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::augment::{augment_plate, AugmentParams, AugmentSpec};
use super::compose::{compose_plate, ComposedPlate, PlateLayout};
use super::glyphs::GlyphSet;
use super::raster::write_ppm;
use super::SynthError;
use crate::annotation::{write_label_file, Alphabet, LabelRecord};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LABEL_DIR: &str = "labels";

/// SplitMix64 output for `state`.
pub fn mix64(state: u64) -> u64 {
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of item `index`: the `index + 1`-th SplitMix64 output from `seed`.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Uniform draws built on raw 64-bit output only, so values do not depend
/// on distribution implementations.
pub struct ItemRng(ChaCha8Rng);

impl ItemRng {
    pub fn new(seed: u64, index: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(item_seed(seed, index)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform index in `0..n` by multiply-shift; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.0.next_u64()) * n as u128) >> 64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    /// Length uniform in `min_len..=max_len`, characters uniform over `charset`.
    Random {
        min_len: usize,
        max_len: usize,
        charset: Vec<char>,
    },
    /// One string drawn uniformly per item.
    Choices(Vec<String>),
}

impl TextSource {
    pub fn random(min_len: usize, max_len: usize, alphabet: &Alphabet) -> Self {
        Self::Random {
            min_len,
            max_len,
            charset: alphabet.chars().to_vec(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        match self {
            TextSource::Random {
                min_len,
                max_len,
                charset,
            } if min_len > max_len || charset.is_empty() => Err(SynthError::Spec(format!(
                "text source needs min_len <= max_len and a non-empty charset (got {min_len}..={max_len}, {} symbols)",
                charset.len()
            ))),
            TextSource::Choices(c) if c.is_empty() => {
                Err(SynthError::Spec("text source has no choices".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn draw(&self, rng: &mut ItemRng) -> String {
        match self {
            TextSource::Random {
                min_len,
                max_len,
                charset,
            } => {
                let len = min_len + rng.below(max_len - min_len + 1);
                (0..len).map(|_| charset[rng.below(charset.len())]).collect()
            }
            TextSource::Choices(c) => c[rng.below(c.len())].clone(),
        }
    }
}

/// Everything one generated item depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub layouts: Vec<PlateLayout>,
    pub glyphs: GlyphSet,
    pub alphabet: Alphabet,
    pub augment: AugmentSpec,
    pub text: TextSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub text: String,
    pub layout: String,
    /// Paths relative to the output directory.
    pub image: String,
    pub label: String,
    pub params: AugmentParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entry serializes") + "\n")
            .collect()
    }
}

/// Draws text, layout and augmentation parameters for item `index`, in that
/// fixed order.
pub fn draw_item(config: &SynthConfig, index: usize) -> (String, usize, AugmentParams) {
    let mut rng = ItemRng::new(config.augment.seed, index as u64);
    let text = config.text.draw(&mut rng);
    let layout = rng.below(config.layouts.len());
    let bg = &config.layouts[layout].background;
    let spec = &config.augment;
    let (w, h) = (f64::from(bg.width()), f64::from(bg.height()));
    let rotation_deg = rng.range(-spec.max_rotation_deg, spec.max_rotation_deg);
    let mut corner_shift = [[0.0; 2]; 4];
    for c in &mut corner_shift {
        c[0] = rng.range(-spec.perspective_jitter, spec.perspective_jitter) * w;
        c[1] = rng.range(-spec.perspective_jitter, spec.perspective_jitter) * h;
    }
    let mut gains = [0.0; 3];
    for g in &mut gains {
        *g = rng.range(spec.gain_range.0, spec.gain_range.1);
    }
    let mut biases = [0.0; 3];
    for b in &mut biases {
        *b = rng.range(spec.bias_range.0, spec.bias_range.1);
    }
    (
        text,
        layout,
        AugmentParams {
            rotation_deg,
            corner_shift,
            gains,
            biases,
        },
    )
}

/// Composes and augments item `index` in memory.
pub fn render_item(config: &SynthConfig, index: usize) -> Result<(ManifestEntry, ComposedPlate), SynthError> {
    let (text, layout_idx, params) = draw_item(config, index);
    let layout = &config.layouts[layout_idx];
    let plate = compose_plate(layout, &text, &config.glyphs, &config.alphabet)
        .map_err(|e| SynthError::Item { index, source: Box::new(e) })?;
    let (image, labels) = augment_plate(&plate.image, &plate.labels, &params, config.augment.fill)
        .map_err(|e| SynthError::Item { index, source: Box::new(e) })?;
    let stem = item_stem(index);
    let entry = ManifestEntry {
        index,
        text,
        layout: layout.name.clone(),
        image: format!("{stem}.ppm"),
        label: format!("{LABEL_DIR}/{stem}.txt"),
        params,
    };
    Ok((entry, ComposedPlate { image, labels }))
}

pub fn item_stem(index: usize) -> String {
    format!("synth_{index:05}")
}

fn write_item(config: &SynthConfig, index: usize, out_dir: &Path) -> Result<ManifestEntry, SynthError> {
    let (entry, plate) = render_item(config, index)?;
    let io = |path: PathBuf| move |source| SynthError::Io {
        index: Some(index),
        path,
        source,
    };
    let image_path = out_dir.join(&entry.image);
    fs::write(&image_path, write_ppm(&plate.image)).map_err(io(image_path.clone()))?;
    let label_path = out_dir.join(&entry.label);
    let labels: &[LabelRecord] = &plate.labels;
    fs::write(&label_path, write_label_file(labels)).map_err(io(label_path.clone()))?;
    Ok(entry)
}

/// Writes `<out>/synth_NNNNN.ppm`, `<out>/labels/synth_NNNNN.txt` and
/// `<out>/manifest.jsonl`. Reruns with equal inputs are byte-identical,
/// whether or not `parallel` is set.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path, parallel: bool) -> Result<Manifest, SynthError> {
    config.augment.validate()?;
    config.text.validate()?;
    if config.layouts.is_empty() {
        return Err(SynthError::Spec("no plate layouts".into()));
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io {
            index: None,
            path,
            source,
        }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    if config.count > 0 {
        let labels = out_dir.join(LABEL_DIR);
        fs::create_dir_all(&labels).map_err(io(&labels))?;
    }

    let entries: Result<Vec<ManifestEntry>, SynthError> = if parallel {
        run_parallel(config, out_dir)
    } else {
        (0..config.count).map(|i| write_item(config, i, out_dir)).collect()
    };
    let manifest = Manifest { entries: entries? };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_jsonl()).map_err(io(&path))?;
    Ok(manifest)
}

#[cfg(feature = "parallel")]
fn run_parallel(config: &SynthConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    use rayon::prelude::*;
    (0..config.count)
        .into_par_iter()
        .map(|i| write_item(config, i, out_dir))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel(config: &SynthConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    (0..config.count).map(|i| write_item(config, i, out_dir)).collect()
}
