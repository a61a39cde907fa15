//! Boxes, IoU, coordinate conversion and planar homographies.
//!
//! Boxes live on disk in center format, normalized to the image size
//! ([`BoxNorm`]). Overlap is always computed on corner-format pixel boxes
//! ([`BoxPixel`]) with continuous areas.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest determinant magnitude accepted for an invertible homography.
pub const MIN_DETERMINANT: f64 = 1e-9;
/// Homogeneous coordinates below this magnitude are treated as points at infinity.
pub const MIN_HOMOGENEOUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate box: zero width or height ({x_min}, {y_min}, {x_max}, {y_max})")]
    DegenerateBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("invalid normalized box: {0}")]
    InvalidBox(String),
    #[error("degenerate correspondence: {0}")]
    DegenerateCorrespondence(&'static str),
    #[error("homography is not invertible (|det| = {0:e})")]
    Singular(f64),
    #[error("point maps to infinity")]
    PointAtInfinity,
}

/// A point in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Center-format box with every coordinate expressed as a fraction of the
/// image size.
///
/// The implied extent may reach outside the frame; clamping happens only in
/// [`BoxNorm::to_pixel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxNorm {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxNorm {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let extent = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.cx) || !unit(self.cy) {
            return Err(GeometryError::InvalidBox(format!(
                "center ({}, {}) outside [0, 1]",
                self.cx, self.cy
            )));
        }
        if !extent(self.w) || !extent(self.h) {
            return Err(GeometryError::InvalidBox(format!(
                "size ({}, {}) outside (0, 1]",
                self.w, self.h
            )));
        }
        Ok(())
    }

    /// Corner-format pixel box, clamped to `[0, width] x [0, height]`.
    pub fn to_pixel(&self, width: u32, height: u32) -> BoxPixel {
        let (fw, fh) = (f64::from(width), f64::from(height));
        let clamp_x = |v: f64| v.clamp(0.0, fw);
        let clamp_y = |v: f64| v.clamp(0.0, fh);
        BoxPixel {
            x_min: clamp_x((self.cx - self.w / 2.0) * fw),
            y_min: clamp_y((self.cy - self.h / 2.0) * fh),
            x_max: clamp_x((self.cx + self.w / 2.0) * fw),
            y_max: clamp_y((self.cy + self.h / 2.0) * fh),
        }
    }

    pub fn from_pixel(b: &BoxPixel, width: u32, height: u32) -> Result<Self, GeometryError> {
        b.to_norm(width, height)
    }
}

/// Corner-format box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPixel {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoxPixel {
    /// Builds a box from two opposite corners in any order.
    pub fn from_corners(a: Point, b: Point) -> Self {
        Self {
            x_min: a.x.min(b.x),
            y_min: a.y.min(b.y),
            x_max: a.x.max(b.x),
            y_max: a.y.max(b.y),
        }
    }

    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Corners in clockwise order starting at the top-left.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn clamp_to(&self, width: u32, height: u32) -> Self {
        let (fw, fh) = (f64::from(width), f64::from(height));
        Self {
            x_min: self.x_min.clamp(0.0, fw),
            y_min: self.y_min.clamp(0.0, fh),
            x_max: self.x_max.clamp(0.0, fw),
            y_max: self.y_max.clamp(0.0, fh),
        }
    }

    pub fn to_norm(&self, width: u32, height: u32) -> Result<BoxNorm, GeometryError> {
        if self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(GeometryError::DegenerateBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            });
        }
        let (fw, fh) = (f64::from(width), f64::from(height));
        BoxNorm::new(
            (self.x_min + self.x_max) / 2.0 / fw,
            (self.y_min + self.y_max) / 2.0 / fh,
            (self.x_max - self.x_min) / fw,
            (self.y_max - self.y_min) / fh,
        )
    }
}

/// Intersection over union with continuous areas. Returns 0 when the union
/// is empty.
pub fn iou(a: &BoxPixel, b: &BoxPixel) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Invertible planar projective transform, stored with `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes `m` so the bottom-right entry is 1 and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let s = m[2][2];
        if s.abs() < MIN_HOMOGENEOUS {
            return Err(GeometryError::Singular(0.0));
        }
        let mut n = m;
        for row in n.iter_mut() {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let h = Self { m: n };
        let det = h.determinant();
        if !det.is_finite() || det.abs() <= MIN_DETERMINANT {
            return Err(GeometryError::Singular(det));
        }
        Ok(h)
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Result<Self, GeometryError> {
        Self::from_matrix([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation by `degrees` (clockwise on screen, since y points down) about `center`.
    pub fn rotation_about(center: Point, degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let tx = center.x - c * center.x + s * center.y;
        let ty = center.y - s * center.x - c * center.y;
        Self {
            m: [[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn determinant(&self) -> f64 {
        self.as_na().determinant()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    fn as_na(&self) -> Matrix3<f64> {
        let m = &self.m;
        Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        )
    }

    fn from_na(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        Self::from_matrix([
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ])
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        if self.is_identity() {
            return Ok(*self);
        }
        let inv = self
            .as_na()
            .try_inverse()
            .ok_or(GeometryError::Singular(self.determinant()))?;
        Self::from_na(&inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self, GeometryError> {
        if first.is_identity() {
            return Ok(*self);
        }
        if self.is_identity() {
            return Ok(*first);
        }
        Self::from_na(&(self.as_na() * first.as_na()))
    }

    pub fn apply(&self, p: Point) -> Result<Point, GeometryError> {
        apply_homography(self, p)
    }
}

/// Projective application with division by the homogeneous coordinate.
pub fn apply_homography(h: &Homography, p: Point) -> Result<Point, GeometryError> {
    let m = &h.m;
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if !w.is_finite() || w.abs() < MIN_HOMOGENEOUS {
        return Err(GeometryError::PointAtInfinity);
    }
    let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
    let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
    Ok(Point::new(x / w, y / w))
}

/// Translates points to their centroid and scales them to mean distance √2.
fn conditioning(pts: &[Point; 4]) -> Matrix3<f64> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / 4.0;
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn has_collinear_triple(pts: &[Point; 4]) -> bool {
    let scale = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| (a.x - b.x).hypot(a.y - b.y)))
        .fold(0.0_f64, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return true;
    }
    // Twice the triangle area, relative to the squared point spread.
    let tol = 1e-10 * scale * scale;
    for skip in 0..4 {
        let t: Vec<&Point> = pts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, p)| p)
            .collect();
        let cross = (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[1].y - t[0].y) * (t[2].x - t[0].x);
        if cross.abs() <= tol {
            return true;
        }
    }
    false
}

/// Direct linear transform from four correspondences, with the bottom-right
/// entry fixed to 1 and both point sets preconditioned.
pub fn solve_homography(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography, GeometryError> {
    if has_collinear_triple(src) {
        return Err(GeometryError::DegenerateCorrespondence(
            "three source points are collinear",
        ));
    }
    if has_collinear_triple(dst) {
        return Err(GeometryError::DegenerateCorrespondence(
            "three destination points are collinear",
        ));
    }
    let ts = conditioning(src);
    let td = conditioning(dst);
    let norm = |t: &Matrix3<f64>, p: &Point| {
        let v = t * Vector3::new(p.x, p.y, 1.0);
        (v.x / v.z, v.y / v.z)
    };

    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = norm(&ts, &src[i]);
        let (u, v) = norm(&td, &dst[i]);
        let r = 2 * i;
        a.set_row(
            r,
            &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[
                x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y,
            ]),
        );
        b[r] = u;
        a.set_row(
            r + 1,
            &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[
                0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y,
            ]),
        );
        b[r + 1] = v;
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or(GeometryError::DegenerateCorrespondence("singular linear system"))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td
        .try_inverse()
        .ok_or(GeometryError::DegenerateCorrespondence("destination conditioning"))?;
    Homography::from_na(&(td_inv * hn * ts)).map_err(|e| match e {
        GeometryError::Singular(_) => {
            GeometryError::DegenerateCorrespondence("solution is not invertible")
        }
        other => other,
    })
}
