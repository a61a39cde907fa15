//! Plain-text label and detection files, the character alphabet, and
//! dataset indexing.
//!
//! A label line is `category cx cy w h`; a detection line appends a sixth
//! `confidence` field. Coordinates are written with exactly six decimals and
//! LF line endings. CR before LF is tolerated on read.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoxNorm;

pub const DEFAULT_ALPHABET: &str = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlphabetError {
    #[error("duplicate character {0:?} in alphabet")]
    Duplicate(char),
    #[error("alphabet is empty")]
    Empty,
}

/// Ordered character set; category `i` is the `i`-th character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self, AlphabetError> {
        let mut index = HashMap::new();
        let mut chars = Vec::new();
        for (i, c) in symbols.chars().enumerate() {
            if index.insert(c, i as u32).is_some() {
                return Err(AlphabetError::Duplicate(c));
            }
            chars.push(c);
        }
        if chars.is_empty() {
            return Err(AlphabetError::Empty);
        }
        Ok(Self { chars, index })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn index_of(&self, c: char) -> Option<u32> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, category: u32) -> Option<char> {
        self.chars.get(category as usize).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Category id used for the whole-plate box in character-level label files.
    pub fn plate_category(&self) -> u32 {
        self.chars.len() as u32
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHABET).expect("default alphabet is valid")
    }
}

/// Ground-truth annotation: one box and its category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub category: u32,
    pub bbox: BoxNorm,
}

/// Model output: a box, its category and a confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub category: u32,
    pub bbox: BoxNorm,
    pub confidence: f64,
}

impl DetectionRecord {
    pub fn label(&self) -> LabelRecord {
        LabelRecord {
            category: self.category,
            bbox: self.bbox,
        }
    }
}

impl LabelRecord {
    pub fn with_confidence(&self, confidence: f64) -> DetectionRecord {
        DetectionRecord {
            category: self.category,
            bbox: self.bbox,
            confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Category,
    Cx,
    Cy,
    W,
    H,
    Confidence,
}

impl Field {
    const ORDER: [Field; 6] = [
        Field::Category,
        Field::Cx,
        Field::Cy,
        Field::W,
        Field::H,
        Field::Confidence,
    ];
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Field::Category => "category",
            Field::Cx => "cx",
            Field::Cy => "cy",
            Field::W => "w",
            Field::H => "h",
            Field::Confidence => "confidence",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("field {field} is not a number: {text:?}")]
    NotNumeric { field: Field, text: String },
    #[error("field {field} out of range: {value}")]
    OutOfRange { field: Field, value: f64 },
    #[error("negative category {0}")]
    NegativeCategory(i64),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    pub kind: ParseErrorKind,
}

fn parse_number(field: Field, text: &str) -> Result<f64, ParseErrorKind> {
    let value: f64 = text.parse().map_err(|_| ParseErrorKind::NotNumeric {
        field,
        text: text.to_string(),
    })?;
    let ok = match field {
        Field::W | Field::H => value > 0.0 && value <= 1.0,
        _ => (0.0..=1.0).contains(&value),
    };
    if ok {
        Ok(value)
    } else {
        Err(ParseErrorKind::OutOfRange { field, value })
    }
}

fn parse_category(text: &str) -> Result<u32, ParseErrorKind> {
    let value: i64 = text.parse().map_err(|_| ParseErrorKind::NotNumeric {
        field: Field::Category,
        text: text.to_string(),
    })?;
    if value < 0 {
        return Err(ParseErrorKind::NegativeCategory(value));
    }
    u32::try_from(value).map_err(|_| ParseErrorKind::OutOfRange {
        field: Field::Category,
        value: value as f64,
    })
}

/// Splits into `(line_number, fields)` for every non-blank line.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.split('\n').enumerate().filter_map(|(i, raw)| {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_fields(fields: &[&str], expected: usize) -> Result<(u32, BoxNorm, Option<f64>), ParseErrorKind> {
    if fields.len() != expected {
        return Err(ParseErrorKind::FieldCount {
            expected,
            found: fields.len(),
        });
    }
    let category = parse_category(fields[0])?;
    let mut vals = [0.0; 5];
    for (k, text) in fields[1..].iter().enumerate() {
        vals[k] = parse_number(Field::ORDER[k + 1], text)?;
    }
    let bbox = BoxNorm {
        cx: vals[0],
        cy: vals[1],
        w: vals[2],
        h: vals[3],
    };
    let conf = (expected == 6).then_some(vals[4]);
    Ok((category, bbox, conf))
}

pub fn parse_label_file(text: &str) -> Result<Vec<LabelRecord>, ParseError> {
    records(text)
        .map(|(line, fields)| {
            parse_fields(&fields, 5)
                .map(|(category, bbox, _)| LabelRecord { category, bbox })
                .map_err(|kind| ParseError { line, kind })
        })
        .collect()
}

pub fn parse_detection_file(text: &str) -> Result<Vec<DetectionRecord>, ParseError> {
    records(text)
        .map(|(line, fields)| {
            parse_fields(&fields, 6)
                .map(|(category, bbox, conf)| DetectionRecord {
                    category,
                    bbox,
                    confidence: conf.unwrap_or_default(),
                })
                .map_err(|kind| ParseError { line, kind })
        })
        .collect()
}

/// Parses every line independently, collecting all errors instead of
/// stopping at the first one. Used by validation.
pub fn check_lines(text: &str, fields: usize) -> Vec<ParseError> {
    records(text)
        .filter_map(|(line, f)| parse_fields(&f, fields).err().map(|kind| ParseError { line, kind }))
        .collect()
}

pub fn write_label_file(records: &[LabelRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 40);
    for r in records {
        let b = &r.bbox;
        let _ = writeln!(out, "{} {:.6} {:.6} {:.6} {:.6}", r.category, b.cx, b.cy, b.w, b.h);
    }
    out
}

pub fn write_detection_file(records: &[DetectionRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 48);
    for r in records {
        let b = &r.bbox;
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            r.category, b.cx, b.cy, b.w, b.h, r.confidence
        );
    }
    out
}

/// Reads the pixel dimensions from a Netpbm (P1-P6) or PNG header.
pub fn probe_dimensions(path: &Path) -> Result<(u32, u32), String> {
    let mut head = Vec::with_capacity(512);
    fs::File::open(path)
        .and_then(|f| f.take(512).read_to_end(&mut head))
        .map_err(|e| e.to_string())?;
    probe_dimensions_bytes(&head)
}

pub fn probe_dimensions_bytes(head: &[u8]) -> Result<(u32, u32), String> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if head.starts_with(PNG_MAGIC) {
        if head.len() < 24 || &head[12..16] != b"IHDR" {
            return Err("truncated PNG header".into());
        }
        let w = u32::from_be_bytes(head[16..20].try_into().unwrap());
        let h = u32::from_be_bytes(head[20..24].try_into().unwrap());
        return check_dims(w, h);
    }
    if head.len() >= 2 && head[0] == b'P' && (b'1'..=b'6').contains(&head[1]) {
        let mut tokens = NetpbmTokens::new(&head[2..]);
        let w = tokens.next_u32().ok_or("missing width in Netpbm header")?;
        let h = tokens.next_u32().ok_or("missing height in Netpbm header")?;
        return check_dims(w, h);
    }
    Err("unrecognized image header".into())
}

fn check_dims(w: u32, h: u32) -> Result<(u32, u32), String> {
    if w == 0 || h == 0 {
        Err(format!("zero image dimension {w}x{h}"))
    } else {
        Ok((w, h))
    }
}

/// Whitespace- and comment-aware tokenizer for Netpbm headers.
pub(crate) struct NetpbmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> NetpbmTokens<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next decimal token; `None` when absent or not a number.
    pub(crate) fn next_u32(&mut self) -> Option<u32> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    /// `None` marks an image without a label file.
    pub label_path: Option<PathBuf>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Images found under a dataset root, sorted by `image_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    pub skipped: Vec<SkippedFile>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot read dataset root {path}: {source}")]
    Root {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Indexes `root/*.<image_extension>`; labels are looked up as
/// `root/<label_subdir>/<stem>.txt` (or beside the image when `label_subdir`
/// is empty).
pub fn build_index(
    root: &Path,
    image_extension: &str,
    label_subdir: &str,
) -> Result<DatasetIndex, IndexError> {
    let read = fs::read_dir(root).map_err(|source| IndexError::Root {
        path: root.to_path_buf(),
        source,
    })?;
    let ext = image_extension.trim_start_matches('.');
    let mut images: Vec<(String, PathBuf)> = read
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case(ext))
        })
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
        .collect();
    images.sort();

    let label_dir = root.join(label_subdir);
    let probe = |(id, path): &(String, PathBuf)| -> Result<IndexEntry, SkippedFile> {
        let (width, height) = probe_dimensions(path).map_err(|reason| SkippedFile {
            path: path.clone(),
            reason,
        })?;
        let label = label_dir.join(format!("{id}.txt"));
        Ok(IndexEntry {
            image_id: id.clone(),
            image_path: path.clone(),
            label_path: label.is_file().then_some(label),
            width,
            height,
        })
    };

    #[cfg(feature = "parallel")]
    let probed: Vec<_> = {
        use rayon::prelude::*;
        images.par_iter().map(probe).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let probed: Vec<_> = images.iter().map(probe).collect();

    let mut index = DatasetIndex::default();
    for r in probed {
        match r {
            Ok(e) => index.entries.push(e),
            Err(s) => index.skipped.push(s),
        }
    }
    Ok(index)
}
