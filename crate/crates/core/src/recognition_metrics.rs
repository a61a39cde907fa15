//! Recognition evaluation: reading order for character boxes, Levenshtein
//! alignment with a deterministic backtrace, and the corpus-level character
//! error rate, character recall and confusion matrix built from it.
//!
//! Edits transform the prediction into the truth. `Delete(c)` is a truth
//! character the prediction missed; `Insert(c)` is a spurious predicted one.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{Alphabet, DetectionRecord};

/// Column/row label of the absence symbol in confusion tables.
pub const ABSENT: &str = "Ø";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecognitionError {
    #[error("character {0:?} is not in the alphabet")]
    UnknownCharacter(char),
    #[error("no ground-truth characters: CER and recall are undefined")]
    UndefinedDenominator,
}

/// A plate string whose characters all belong to an alphabet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PlateTranscript(Vec<char>);

impl PlateTranscript {
    pub fn new(text: &str, alphabet: &Alphabet) -> Result<Self, RecognitionError> {
        let chars: Vec<char> = text.chars().collect();
        if let Some(&c) = chars.iter().find(|c| !alphabet.contains(**c)) {
            return Err(RecognitionError::UnknownCharacter(c));
        }
        Ok(Self(chars))
    }

    pub fn chars(&self) -> &[char] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PlateTranscript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

impl From<PlateTranscript> for String {
    fn from(t: PlateTranscript) -> Self {
        t.to_string()
    }
}

impl TryFrom<String> for PlateTranscript {
    type Error = RecognitionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s, &Alphabet::default())
    }
}

/// Orders character detections into a transcript.
///
/// Boxes are sorted by `cy`; a new row starts wherever the vertical gap
/// between consecutive boxes exceeds `row_gap_factor` times the median box
/// height. Rows are read top to bottom, each left to right. Categories
/// outside the alphabet (e.g. a whole-plate box) are ignored.
pub fn assemble_transcript(
    char_dets: &[DetectionRecord],
    alphabet: &Alphabet,
    row_gap_factor: f64,
) -> PlateTranscript {
    let mut chars: Vec<(char, f64, f64, f64)> = char_dets
        .iter()
        .filter_map(|d| {
            alphabet
                .char_at(d.category)
                .map(|c| (c, d.bbox.cx, d.bbox.cy, d.bbox.h))
        })
        .collect();
    if chars.is_empty() {
        return PlateTranscript::default();
    }
    let mut heights: Vec<f64> = chars.iter().map(|c| c.3).collect();
    heights.sort_by(f64::total_cmp);
    let n = heights.len();
    let median = if n % 2 == 1 {
        heights[n / 2]
    } else {
        (heights[n / 2 - 1] + heights[n / 2]) / 2.0
    };
    let max_gap = row_gap_factor * median;

    chars.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut out = Vec::with_capacity(chars.len());
    let mut row: Vec<(char, f64)> = Vec::new();
    let mut prev_cy = chars[0].2;
    let mut flush = |row: &mut Vec<(char, f64)>| {
        row.sort_by(|a, b| a.1.total_cmp(&b.1));
        out.extend(row.drain(..).map(|(c, _)| c));
    };
    for &(c, cx, cy, _) in &chars {
        if cy - prev_cy > max_gap {
            flush(&mut row);
        }
        row.push((c, cx));
        prev_cy = cy;
    }
    flush(&mut row);
    PlateTranscript(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Match { c: char },
    Substitute { truth: char, pred: char },
    /// Truth character missing from the prediction.
    Delete { truth: char },
    /// Predicted character with no truth counterpart.
    Insert { pred: char },
}

impl EditOp {
    pub fn truth(&self) -> Option<char> {
        match *self {
            EditOp::Match { c } => Some(c),
            EditOp::Substitute { truth, .. } | EditOp::Delete { truth } => Some(truth),
            EditOp::Insert { .. } => None,
        }
    }

    pub fn pred(&self) -> Option<char> {
        match *self {
            EditOp::Match { c } => Some(c),
            EditOp::Substitute { pred, .. } | EditOp::Insert { pred } => Some(pred),
            EditOp::Delete { .. } => None,
        }
    }

    pub fn is_edit(&self) -> bool {
        !matches!(self, EditOp::Match { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl OpCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn add(&mut self, o: &Self) {
        self.matches += o.matches;
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
    }
}

impl Alignment {
    pub fn truth_string(&self) -> String {
        self.ops.iter().filter_map(EditOp::truth).collect()
    }

    pub fn pred_string(&self) -> String {
        self.ops.iter().filter_map(EditOp::pred).collect()
    }

    pub fn counts(&self) -> OpCounts {
        let mut c = OpCounts::default();
        for op in &self.ops {
            match op {
                EditOp::Match { .. } => c.matches += 1,
                EditOp::Substitute { .. } => c.substitutions += 1,
                EditOp::Delete { .. } => c.deletions += 1,
                EditOp::Insert { .. } => c.insertions += 1,
            }
        }
        c
    }
}

/// Unit-cost Levenshtein distance and an alignment realizing it.
///
/// Backtracking from the end prefers the diagonal (match or substitute),
/// then delete, then insert, so the alignment is unique.
pub fn edit_alignment(truth: &[char], pred: &[char]) -> (usize, Alignment) {
    let (m, n) = (truth.len(), pred.len());
    let cols = n + 1;
    let mut d = vec![0usize; (m + 1) * cols];
    for j in 0..=n {
        d[j] = j;
    }
    for i in 1..=m {
        d[i * cols] = i;
        for j in 1..=n {
            let diag = d[(i - 1) * cols + j - 1] + usize::from(truth[i - 1] != pred[j - 1]);
            let del = d[(i - 1) * cols + j] + 1;
            let ins = d[i * cols + j - 1] + 1;
            d[i * cols + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = d[i * cols + j];
        if i > 0 && j > 0 {
            let same = truth[i - 1] == pred[j - 1];
            if here == d[(i - 1) * cols + j - 1] + usize::from(!same) {
                ops.push(if same {
                    EditOp::Match { c: truth[i - 1] }
                } else {
                    EditOp::Substitute {
                        truth: truth[i - 1],
                        pred: pred[j - 1],
                    }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * cols + j] + 1 {
            ops.push(EditOp::Delete { truth: truth[i - 1] });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { pred: pred[j - 1] });
            j -= 1;
        }
    }
    ops.reverse();
    (d[m * cols + n], Alignment { ops })
}

/// Counts over `(alphabet ∪ {Ø}) x (alphabet ∪ {Ø})`; rows are truth,
/// columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    symbols: Vec<char>,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPair {
    /// `None` stands for the absence symbol.
    pub truth: Option<char>,
    pub pred: Option<char>,
    pub count: u64,
}

impl ConfusionMatrix {
    pub fn new(alphabet: &Alphabet) -> Self {
        let symbols = alphabet.chars().to_vec();
        let side = symbols.len() + 1;
        Self {
            symbols,
            counts: vec![0; side * side],
        }
    }

    fn side(&self) -> usize {
        self.symbols.len() + 1
    }

    fn slot(&self, c: Option<char>) -> Result<usize, RecognitionError> {
        match c {
            None => Ok(self.symbols.len()),
            Some(ch) => self
                .symbols
                .iter()
                .position(|&s| s == ch)
                .ok_or(RecognitionError::UnknownCharacter(ch)),
        }
    }

    pub fn record(&mut self, op: &EditOp) -> Result<(), RecognitionError> {
        let (r, c) = (self.slot(op.truth())?, self.slot(op.pred())?);
        let side = self.side();
        self.counts[r * side + c] += 1;
        Ok(())
    }

    pub fn get(&self, truth: Option<char>, pred: Option<char>) -> u64 {
        match (self.slot(truth), self.slot(pred)) {
            (Ok(r), Ok(c)) => self.counts[r * self.side() + c],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn off_diagonal_total(&self) -> u64 {
        self.total() - (0..self.side()).map(|i| self.counts[i * self.side() + i]).sum::<u64>()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Row-major count grid including the absence row and column.
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.side()).map(<[u64]>::to_vec).collect()
    }

    fn symbol_at(&self, i: usize) -> Option<char> {
        self.symbols.get(i).copied()
    }

    /// Non-zero off-diagonal cells, most frequent first (ties in row, then
    /// column order).
    pub fn confusions(&self) -> Vec<ConfusionPair> {
        let side = self.side();
        let mut pairs: Vec<(usize, usize, u64)> = (0..side)
            .flat_map(|r| (0..side).map(move |c| (r, c)))
            .filter(|&(r, c)| r != c)
            .map(|(r, c)| (r, c, self.counts[r * side + c]))
            .filter(|p| p.2 > 0)
            .collect();
        pairs.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        pairs
            .into_iter()
            .map(|(r, c, count)| ConfusionPair {
                truth: self.symbol_at(r),
                pred: self.symbol_at(c),
                count,
            })
            .collect()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.symbols, other.symbols);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

impl Serialize for ConfusionMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            symbols: String,
            absent: &'a str,
            counts: Vec<Vec<u64>>,
        }
        Repr {
            symbols: self.symbols.iter().collect(),
            absent: ABSENT,
            counts: self.rows(),
        }
        .serialize(s)
    }
}

/// CSV grid with a header row; rows are truth, columns prediction, the
/// absence symbol last on both axes.
pub fn confusion_to_table(matrix: &ConfusionMatrix) -> String {
    let labels: Vec<String> = matrix
        .symbols
        .iter()
        .map(char::to_string)
        .chain(std::iter::once(ABSENT.to_string()))
        .collect();
    let mut out = String::from("truth\\pred");
    for l in &labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (label, row) in labels.iter().zip(matrix.rows()) {
        out.push_str(label);
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateDetail {
    pub id: String,
    pub truth: PlateTranscript,
    pub pred: PlateTranscript,
    pub distance: usize,
    pub counts: OpCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognitionReport {
    /// Corpus edits over corpus ground-truth characters.
    pub cer: f64,
    /// Matches over ground-truth characters.
    pub char_recall: f64,
    pub exact_match_rate: f64,
    pub plates: usize,
    pub truth_chars: usize,
    pub total_distance: usize,
    pub counts: OpCounts,
    pub top_confusions: Vec<ConfusionPair>,
    pub confusion: ConfusionMatrix,
    pub details: Vec<PlateDetail>,
}

/// Running sums for [`RecognitionReport`]. Accumulators over disjoint plate
/// sets can be merged in any order.
#[derive(Debug, Clone)]
pub struct RecognitionAccumulator {
    counts: OpCounts,
    truth_chars: usize,
    distance: usize,
    exact: usize,
    confusion: ConfusionMatrix,
    details: Vec<PlateDetail>,
}

impl RecognitionAccumulator {
    pub fn new(alphabet: &Alphabet) -> Self {
        Self {
            counts: OpCounts::default(),
            truth_chars: 0,
            distance: 0,
            exact: 0,
            confusion: ConfusionMatrix::new(alphabet),
            details: Vec::new(),
        }
    }

    pub fn add(
        &mut self,
        id: impl Into<String>,
        truth: &PlateTranscript,
        pred: &PlateTranscript,
    ) -> Result<(), RecognitionError> {
        let (distance, alignment) = edit_alignment(truth.chars(), pred.chars());
        for op in &alignment.ops {
            self.confusion.record(op)?;
        }
        let counts = alignment.counts();
        self.counts.add(&counts);
        self.truth_chars += truth.len();
        self.distance += distance;
        self.exact += usize::from(distance == 0);
        self.details.push(PlateDetail {
            id: id.into(),
            truth: truth.clone(),
            pred: pred.clone(),
            distance,
            counts,
        });
        Ok(())
    }

    pub fn merge(&mut self, other: RecognitionAccumulator) {
        self.counts.add(&other.counts);
        self.truth_chars += other.truth_chars;
        self.distance += other.distance;
        self.exact += other.exact;
        self.confusion.merge(&other.confusion);
        self.details.extend(other.details);
    }

    pub fn finish(self) -> Result<RecognitionReport, RecognitionError> {
        if self.truth_chars == 0 {
            return Err(RecognitionError::UndefinedDenominator);
        }
        let n = self.truth_chars as f64;
        Ok(RecognitionReport {
            cer: self.distance as f64 / n,
            char_recall: self.counts.matches as f64 / n,
            exact_match_rate: self.exact as f64 / self.details.len() as f64,
            plates: self.details.len(),
            truth_chars: self.truth_chars,
            total_distance: self.distance,
            counts: self.counts,
            top_confusions: self.confusion.confusions(),
            confusion: self.confusion,
            details: self.details,
        })
    }
}

/// Evaluates `(truth, prediction)` pairs; plate ids are their positions.
pub fn evaluate_recognition(
    pairs: &[(PlateTranscript, PlateTranscript)],
    alphabet: &Alphabet,
) -> Result<RecognitionReport, RecognitionError> {
    let mut acc = RecognitionAccumulator::new(alphabet);
    for (i, (t, p)) in pairs.iter().enumerate() {
        acc.add(i.to_string(), t, p)?;
    }
    acc.finish()
}
