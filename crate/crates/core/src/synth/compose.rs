//! Laying glyphs out on a plate background and alpha-compositing them.

use super::glyphs::{Glyph, GlyphSet};
use super::raster::{RasterImage, Rgb};
use super::SynthError;
use crate::annotation::{Alphabet, LabelRecord};
use crate::geometry::{BoxNorm, BoxPixel};

/// Where glyphs go on a background. Glyph bottoms sit on `baseline_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateLayout {
    pub name: String,
    pub background: RasterImage,
    pub baseline_y: u32,
    pub left_margin: u32,
    pub gap: u32,
    pub glyph_scale: f64,
}

/// Composited plate and its labels: the plate box first, then one record
/// per character in reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedPlate {
    pub image: RasterImage,
    pub labels: Vec<LabelRecord>,
}

fn scaled_size(g: &Glyph, scale: f64) -> (u32, u32) {
    let s = |v: u32| ((f64::from(v) * scale).round() as u32).max(1);
    (s(g.width()), s(g.height()))
}

fn blend(glyph: u8, background: u8, alpha: f64) -> u8 {
    (alpha * f64::from(glyph) + (1.0 - alpha) * f64::from(background))
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Composites `text` left to right onto the layout background.
///
/// Each output channel is `round(a * glyph + (1 - a) * background)`. Glyphs
/// are resized with nearest-neighbour sampling. A character's label is the
/// tight box around its non-zero coverage.
pub fn compose_plate(
    layout: &PlateLayout,
    text: &str,
    glyphs: &GlyphSet,
    alphabet: &Alphabet,
) -> Result<ComposedPlate, SynthError> {
    let bg = &layout.background;
    let (bw, bh) = (bg.width(), bg.height());

    let mut placed = Vec::new();
    for c in text.chars() {
        let g = glyphs.get(&c).ok_or(SynthError::MissingGlyph(c))?;
        let category = alphabet.index_of(c).ok_or(SynthError::MissingGlyph(c))?;
        placed.push((g, category, scaled_size(g, layout.glyph_scale)));
    }

    let total_w: u64 = placed.iter().map(|p| u64::from(p.2 .0)).sum::<u64>()
        + u64::from(layout.gap) * placed.len().saturating_sub(1) as u64;
    let tallest = placed.iter().map(|p| p.2 .1).max().unwrap_or(0);
    if u64::from(layout.left_margin) + total_w > u64::from(bw)
        || tallest > layout.baseline_y
        || layout.baseline_y > bh
    {
        return Err(SynthError::Layout(format!(
            "{} glyph(s) spanning {total_w}x{tallest} px do not fit layout {:?} ({bw}x{bh})",
            placed.len(),
            layout.name
        )));
    }

    let mut image = bg.clone();
    let plate_box = BoxNorm::new(0.5, 0.5, 1.0, 1.0).expect("full-frame box");
    let mut labels = vec![LabelRecord {
        category: alphabet.plate_category(),
        bbox: plate_box,
    }];

    let mut x0 = layout.left_margin;
    for (g, category, (sw, sh)) in placed {
        let y0 = layout.baseline_y - sh;
        let mut ink: Option<(u32, u32, u32, u32)> = None;
        for dy in 0..sh {
            let gy = ((u64::from(dy) * 2 + 1) * u64::from(g.height()) / (2 * u64::from(sh))) as u32;
            for dx in 0..sw {
                let gx = ((u64::from(dx) * 2 + 1) * u64::from(g.width()) / (2 * u64::from(sw))) as u32;
                let a = f64::from(g.alpha(gx, gy));
                if a <= 0.0 {
                    continue;
                }
                let (x, y) = (x0 + dx, y0 + dy);
                let src: Rgb = g.image.get(gx, gy);
                let dst = image.get(x, y);
                image.put(
                    x,
                    y,
                    [
                        blend(src[0], dst[0], a),
                        blend(src[1], dst[1], a),
                        blend(src[2], dst[2], a),
                    ],
                );
                ink = Some(match ink {
                    None => (x, y, x, y),
                    Some((a0, b0, a1, b1)) => (a0.min(x), b0.min(y), a1.max(x), b1.max(y)),
                });
            }
        }
        // Fully transparent glyphs fall back to their placed rectangle.
        let (ix0, iy0, ix1, iy1) = ink.unwrap_or((x0, y0, x0 + sw - 1, y0 + sh - 1));
        let tight = BoxPixel::new(
            f64::from(ix0),
            f64::from(iy0),
            f64::from(ix1 + 1),
            f64::from(iy1 + 1),
        );
        labels.push(LabelRecord {
            category,
            bbox: tight.to_norm(bw, bh)?,
        });
        x0 += sw + layout.gap;
    }
    Ok(ComposedPlate { image, labels })
}

fn bordered(width: u32, height: u32, body: Rgb, border: Rgb, thickness: u32) -> RasterImage {
    let mut img = RasterImage::filled(width, height, border);
    img.fill_rect(thickness, thickness, width - thickness, height - thickness, body);
    img
}

/// Three plate styles sized for up to eight built-in glyphs at `cell = 4`.
pub fn builtin_layouts() -> Vec<PlateLayout> {
    let (w, h) = (240, 80);
    let white = bordered(w, h, [236, 236, 230], [40, 40, 48], 3);
    let yellow = bordered(w, h, [242, 198, 44], [18, 18, 18], 4);
    let mut banded = bordered(w, h, [228, 232, 240], [24, 40, 110], 3);
    banded.fill_rect(3, 3, 14, h - 3, [24, 60, 160]);
    let layout = |name: &str, background: RasterImage, left_margin: u32| PlateLayout {
        name: name.to_string(),
        background,
        baseline_y: 58,
        left_margin,
        gap: 3,
        glyph_scale: 1.25,
    };
    vec![
        layout("white", white, 12),
        layout("yellow", yellow, 12),
        layout("banded", banded, 18),
    ]
}
