//! Character glyph crops: a built-in 5x7 bitmap set and loading from PPM
//! crops on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::raster::{read_ppm, RasterImage, Rgb};
use super::SynthError;
use crate::annotation::Alphabet;

/// A character crop with per-pixel coverage in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub character: char,
    pub image: RasterImage,
    alpha: Vec<f32>,
}

impl Glyph {
    pub fn new(character: char, image: RasterImage, alpha: Vec<f32>) -> Option<Self> {
        let n = image.width() as usize * image.height() as usize;
        (alpha.len() == n && alpha.iter().all(|a| (0.0..=1.0).contains(a))).then_some(Self {
            character,
            image,
            alpha,
        })
    }

    /// Same color everywhere with constant coverage.
    pub fn uniform(character: char, width: u32, height: u32, color: Rgb, alpha: f32) -> Self {
        let image = RasterImage::filled(width, height, color);
        let n = width as usize * height as usize;
        Self::new(character, image, vec![alpha; n]).expect("uniform alpha in range")
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn alpha(&self, x: u32, y: u32) -> f32 {
        self.alpha[y as usize * self.width() as usize + x as usize]
    }

    /// Dark-on-light crop: coverage is `1 - luma / 255`.
    pub fn from_crop(character: char, image: RasterImage) -> Self {
        let alpha = image
            .pixels()
            .chunks_exact(3)
            .map(|p| {
                let luma = 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]);
                (1.0 - luma / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        Self {
            character,
            image,
            alpha,
        }
    }
}

pub type GlyphSet = BTreeMap<char, Glyph>;

const INK: Rgb = [22, 24, 30];

#[rustfmt::skip]
const FONT_5X7: [(char, [&str; 7]); 36] = [
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."]),
    ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('B', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('C', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('D', ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('G', [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('I', [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('J', ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('K', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('N', ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('Q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
    ('R', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('S', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('V', ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('W', ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."]),
    ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('Y', ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."]),
    ('Z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
];

fn render_bitmap(character: char, rows: &[&str; 7], cell: u32) -> Glyph {
    let (w, h) = (5 * cell, 7 * cell);
    let image = RasterImage::filled(w, h, INK);
    let mut alpha = vec![0.0f32; (w * h) as usize];
    for (ry, row) in rows.iter().enumerate() {
        for (rx, b) in row.bytes().enumerate() {
            if b != b'#' {
                continue;
            }
            for y in ry as u32 * cell..(ry as u32 + 1) * cell {
                for x in rx as u32 * cell..(rx as u32 + 1) * cell {
                    alpha[(y * w + x) as usize] = 1.0;
                }
            }
        }
    }
    Glyph::new(character, image, alpha).expect("bitmap glyph is consistent")
}

/// Block glyphs for `0-9A-Z`, each `5*cell` by `7*cell` pixels.
pub fn builtin_glyphs(cell: u32) -> GlyphSet {
    let cell = cell.max(1);
    FONT_5X7
        .iter()
        .map(|(c, rows)| (*c, render_bitmap(*c, rows, cell)))
        .collect()
}

/// Loads `<char>.ppm` crops for every alphabet symbol present in `dir`.
pub fn load_glyph_dir(dir: &Path, alphabet: &Alphabet) -> Result<GlyphSet, SynthError> {
    let mut set = GlyphSet::new();
    for &c in alphabet.chars() {
        let path = dir.join(format!("{c}.ppm"));
        if !path.is_file() {
            continue;
        }
        let bytes = fs::read(&path).map_err(|source| SynthError::Io {
            index: None,
            path: path.clone(),
            source,
        })?;
        let img = read_ppm(&bytes).map_err(|source| SynthError::Ppm { path, source })?;
        set.insert(c, Glyph::from_crop(c, img));
    }
    Ok(set)
}
