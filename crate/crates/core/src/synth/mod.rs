//! Synthetic labeled plates: glyph compositing, rotation and perspective
//! warps, channel adjustment, and dataset output as PPM images with label
//! files.

mod augment;
mod compose;
mod generate;
mod glyphs;
mod raster;

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use augment::{
    adjust_channels, augment_plate, warp_box, warp_box_unclamped, warp_image, AugmentParams,
    AugmentSpec,
};
pub use compose::{builtin_layouts, compose_plate, ComposedPlate, PlateLayout};
pub use generate::{
    draw_item, generate_dataset, item_seed, item_stem, mix64, render_item, ItemRng, Manifest,
    ManifestEntry, SynthConfig, TextSource, LABEL_DIR, MANIFEST_FILE,
};
pub use glyphs::{builtin_glyphs, load_glyph_dir, Glyph, GlyphSet};
pub use raster::{read_ppm, write_ppm, PpmError, RasterImage, Rgb};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no glyph for character {0:?}")]
    MissingGlyph(char),
    #[error("layout overflow: {0}")]
    Layout(String),
    #[error("invalid generator settings: {0}")]
    Spec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Ppm {
        path: PathBuf,
        #[source]
        source: PpmError,
    },
    #[error("item {index}: {source}")]
    Item {
        index: usize,
        #[source]
        source: Box<SynthError>,
    },
    #[error("{}{}: {source}", .index.map(|i| format!("item {i}: ")).unwrap_or_default(), .path.display())]
    Io {
        index: Option<usize>,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
