//! Geometric and photometric augmentation: homography warps with bilinear
//! resampling, box warping, and per-channel gain/bias.
//!
//! Pixel `(i, j)` is sampled at its center `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use super::raster::{RasterImage, Rgb};
use super::SynthError;
use crate::annotation::LabelRecord;
use crate::geometry::{apply_homography, solve_homography, BoxPixel, Homography, Point};

/// Inverse-maps every destination pixel center through `h` and samples the
/// source bilinearly. Samples outside the source extent, or mapping to
/// infinity, take `fill`.
pub fn warp_image(img: &RasterImage, h: &Homography, fill: Rgb) -> Result<RasterImage, SynthError> {
    if h.is_identity() {
        return Ok(img.clone());
    }
    let inv = h.inverse()?;
    let (w, ht) = (img.width(), img.height());
    let (fw, fh) = (f64::from(w), f64::from(ht));
    let mut out = RasterImage::filled(w, ht, fill);
    for y in 0..ht {
        for x in 0..w {
            let Ok(src) = apply_homography(&inv, Point::new(f64::from(x) + 0.5, f64::from(y) + 0.5)) else {
                continue;
            };
            if !(0.0..=fw).contains(&src.x) || !(0.0..=fh).contains(&src.y) {
                continue;
            }
            out.put(x, y, bilinear(img, src.x - 0.5, src.y - 0.5));
        }
    }
    Ok(out)
}

/// Bilinear sample at continuous pixel-index coordinates, clamping
/// neighbours to the image edge.
fn bilinear(img: &RasterImage, u: f64, v: f64) -> Rgb {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let cx = |x: i64| x.clamp(0, w - 1) as u32;
    let cy = |y: i64| y.clamp(0, h - 1) as u32;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let p00 = img.get(cx(x0), cy(y0));
    let p10 = img.get(cx(x0 + 1), cy(y0));
    let p01 = img.get(cx(x0), cy(y0 + 1));
    let p11 = img.get(cx(x0 + 1), cy(y0 + 1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
        let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Axis-aligned hull of the four warped corners, clamped to the frame.
/// Corners that map to infinity are ignored; if all do, the result is the
/// empty box at the origin.
pub fn warp_box(b: &BoxPixel, h: &Homography, width: u32, height: u32) -> BoxPixel {
    warp_box_unclamped(b, h)
        .map(|hull| hull.clamp_to(width, height))
        .unwrap_or(BoxPixel::new(0.0, 0.0, 0.0, 0.0))
}

pub fn warp_box_unclamped(b: &BoxPixel, h: &Homography) -> Option<BoxPixel> {
    let pts: Vec<Point> = b
        .corners()
        .iter()
        .filter_map(|&p| apply_homography(h, p).ok())
        .collect();
    let first = *pts.first()?;
    Some(pts.iter().fold(BoxPixel::from_corners(first, first), |acc, p| BoxPixel {
        x_min: acc.x_min.min(p.x),
        y_min: acc.y_min.min(p.y),
        x_max: acc.x_max.max(p.x),
        y_max: acc.y_max.max(p.y),
    }))
}

/// Per channel: `clamp(round(gain * v + bias), 0, 255)`.
pub fn adjust_channels(img: &RasterImage, gains: [f64; 3], biases: [f64; 3]) -> RasterImage {
    let mut lut = [[0u8; 256]; 3];
    for c in 0..3 {
        for v in 0..256 {
            lut[c][v] = (gains[c] * v as f64 + biases[c]).round().clamp(0.0, 255.0) as u8;
        }
    }
    let pixels = img
        .pixels()
        .chunks_exact(3)
        .flat_map(|p| [lut[0][p[0] as usize], lut[1][p[1] as usize], lut[2][p[2] as usize]])
        .collect();
    RasterImage::from_raw(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Ranges the per-item augmentation parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Rotation is drawn from `[-max_rotation_deg, max_rotation_deg]`.
    pub max_rotation_deg: f64,
    /// Largest corner displacement as a fraction of the image side.
    pub perspective_jitter: f64,
    pub gain_range: (f64, f64),
    pub bias_range: (f64, f64),
    pub fill: Rgb,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            max_rotation_deg: 8.0,
            perspective_jitter: 0.06,
            gain_range: (0.8, 1.2),
            bias_range: (-20.0, 20.0),
            fill: [0, 0, 0],
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// No geometric or photometric change.
    pub fn identity(seed: u64) -> Self {
        Self {
            max_rotation_deg: 0.0,
            perspective_jitter: 0.0,
            gain_range: (1.0, 1.0),
            bias_range: (0.0, 0.0),
            fill: [0, 0, 0],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if !(self.max_rotation_deg.is_finite() && self.max_rotation_deg >= 0.0 && self.max_rotation_deg < 90.0) {
            return bad(format!("rotation range must be in [0, 90), got {}", self.max_rotation_deg));
        }
        if !(0.0..0.25).contains(&self.perspective_jitter) {
            return bad(format!("perspective jitter must be in [0, 0.25), got {}", self.perspective_jitter));
        }
        let (g0, g1) = self.gain_range;
        if !(g0.is_finite() && g1.is_finite() && 0.0 <= g0 && g0 <= g1) {
            return bad(format!("gain range must satisfy 0 <= lo <= hi, got ({g0}, {g1})"));
        }
        let (b0, b1) = self.bias_range;
        if !(b0.is_finite() && b1.is_finite() && b0 <= b1) {
            return bad(format!("bias range must satisfy lo <= hi, got ({b0}, {b1})"));
        }
        Ok(())
    }
}

/// Parameters drawn for one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    /// Pixel displacement of the top-left, top-right, bottom-right and
    /// bottom-left corners.
    pub corner_shift: [[f64; 2]; 4],
    pub gains: [f64; 3],
    pub biases: [f64; 3],
}

impl AugmentParams {
    pub const IDENTITY: Self = Self {
        rotation_deg: 0.0,
        corner_shift: [[0.0; 2]; 4],
        gains: [1.0; 3],
        biases: [0.0; 3],
    };

    /// Rotation about the image center followed by the corner perspective
    /// warp, fused into a single homography.
    pub fn homography(&self, width: u32, height: u32) -> Result<Homography, SynthError> {
        let (w, h) = (f64::from(width), f64::from(height));
        let rotation = Homography::rotation_about(Point::new(w / 2.0, h / 2.0), self.rotation_deg);
        let perspective = if self.corner_shift.iter().flatten().all(|&d| d == 0.0) {
            Homography::IDENTITY
        } else {
            let src = [
                Point::new(0.0, 0.0),
                Point::new(w, 0.0),
                Point::new(w, h),
                Point::new(0.0, h),
            ];
            let mut dst = src;
            for (p, s) in dst.iter_mut().zip(&self.corner_shift) {
                p.x += s[0];
                p.y += s[1];
            }
            solve_homography(&src, &dst)?
        };
        Ok(perspective.compose(&rotation)?)
    }
}

/// Warps image and labels through the composite homography, then adjusts
/// channels. Labels whose warped box collapses to zero area are dropped.
pub fn augment_plate(
    image: &RasterImage,
    labels: &[LabelRecord],
    params: &AugmentParams,
    fill: Rgb,
) -> Result<(RasterImage, Vec<LabelRecord>), SynthError> {
    let (w, h) = (image.width(), image.height());
    let hom = params.homography(w, h)?;
    if hom.is_identity() {
        return Ok((adjust_channels(image, params.gains, params.biases), labels.to_vec()));
    }
    let warped = warp_image(image, &hom, fill)?;
    let out_labels = labels
        .iter()
        .filter_map(|l| {
            let b = warp_box(&l.bbox.to_pixel(w, h), &hom, w, h);
            b.to_norm(w, h).ok().map(|bbox| LabelRecord {
                category: l.category,
                bbox,
            })
        })
        .collect();
    Ok((adjust_channels(&warped, params.gains, params.biases), out_labels))
}
