//! Digit dataset ingest: CSV parsing, binarization and visible-layer encoding.
//!
//! The visible layer of a classifier RBM is the pixel bits followed by a
//! one-hot block of label bits. For 8×8 digits that is 64 + 10 = 74 units.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::BinaryVector;
use crate::error::{Error, Result};

/// Pixel/label split of the visible layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_pixels: usize,
    pub n_classes: usize,
}

impl Layout {
    pub const DIGITS: Layout = Layout {
        n_pixels: 64,
        n_classes: 10,
    };

    pub fn n_visible(&self) -> usize {
        self.n_pixels + self.n_classes
    }

    pub fn label_bit(&self, class_id: usize) -> usize {
        self.n_pixels + class_id
    }

    pub fn label_bits(&self) -> std::ops::Range<usize> {
        self.n_pixels..self.n_visible()
    }
}

impl Default for Layout {
    fn default() -> Self {
        Layout::DIGITS
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPattern {
    pub pixels: BinaryVector,
    pub label: usize,
}

impl LabeledPattern {
    pub fn new(pixels: BinaryVector, label: usize) -> Self {
        LabeledPattern { pixels, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub layout: Layout,
    pub patterns: Vec<LabeledPattern>,
    pub split: SplitTag,
}

impl Dataset {
    /// Validates every pattern against `layout`.
    pub fn new(layout: Layout, patterns: Vec<LabeledPattern>, split: SplitTag) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::EmptyDataset(format!("{split:?}").to_lowercase()));
        }
        for p in &patterns {
            crate::error::check_len("pattern pixels", layout.n_pixels, p.pixels.len())?;
            if p.label >= layout.n_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} outside 0..{}",
                    p.label, layout.n_classes
                )));
            }
        }
        Ok(Dataset {
            layout,
            patterns,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Encoded visible vectors in dataset order.
    pub fn visible_vectors(&self) -> Vec<BinaryVector> {
        self.patterns
            .iter()
            .map(|p| encode_visible_with(self.layout, p))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.layout.n_classes];
        for p in &self.patterns {
            counts[p.label] += 1;
        }
        counts
    }
}

/// Parses a CSV file of `n_pixels` integer intensities followed by a label and
/// binarizes every pixel as `intensity / max_intensity >= threshold`, where
/// `max_intensity` is the largest intensity in the file.
pub fn load_digits(path: impl AsRef<Path>, threshold: f64, split: SplitTag) -> Result<Dataset> {
    load_digits_with(path, threshold, split, Layout::DIGITS)
}

pub fn load_digits_with(
    path: impl AsRef<Path>,
    threshold: f64,
    split: SplitTag,
    layout: Layout,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_digits(&text, path, threshold, split, layout)
}

pub(crate) fn parse_digits(
    text: &str,
    path: &Path,
    threshold: f64,
    split: SplitTag,
    layout: Layout,
) -> Result<Dataset> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "binarization threshold {threshold} must lie in (0, 1)"
        )));
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut rows: Vec<(Vec<u64>, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != layout.n_pixels + 1 {
            return Err(parse_err(
                line_no,
                format!(
                    "expected {} fields, found {}",
                    layout.n_pixels + 1,
                    fields.len()
                ),
            ));
        }
        let mut intensities = Vec::with_capacity(layout.n_pixels);
        for (col, f) in fields[..layout.n_pixels].iter().enumerate() {
            let value = f.parse::<u64>().map_err(|_| {
                parse_err(line_no, format!("column {}: bad intensity {f:?}", col + 1))
            })?;
            intensities.push(value);
        }
        let label_field = fields[layout.n_pixels];
        let label = label_field
            .parse::<usize>()
            .map_err(|_| parse_err(line_no, format!("bad label {label_field:?}")))?;
        if label >= layout.n_classes {
            return Err(parse_err(
                line_no,
                format!("label {label} outside 0..{}", layout.n_classes),
            ));
        }
        rows.push((intensities, label));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }

    let max_intensity = rows
        .iter()
        .flat_map(|(px, _)| px.iter().copied())
        .max()
        .unwrap_or(0);
    let patterns = rows
        .into_iter()
        .map(|(px, label)| {
            let pixels = BinaryVector::from_bits(px.into_iter().map(|x| {
                u8::from(max_intensity > 0 && x as f64 / max_intensity as f64 >= threshold)
            }));
            LabeledPattern { pixels, label }
        })
        .collect();
    Dataset::new(layout, patterns, split)
}

/// Digit-layout encoding: 64 pixel bits then a 10-bit one-hot label.
pub fn encode_visible(p: &LabeledPattern) -> BinaryVector {
    encode_visible_with(Layout::DIGITS, p)
}

pub fn encode_visible_with(layout: Layout, p: &LabeledPattern) -> BinaryVector {
    let mut bits = Vec::with_capacity(layout.n_visible());
    bits.extend_from_slice(p.pixels.as_slice());
    bits.extend((0..layout.n_classes).map(|c| u8::from(c == p.label)));
    BinaryVector::from_bits(bits)
}

/// Recovers the label from a visible vector whose label block is exactly one-hot.
pub fn decode_label(layout: Layout, v: &BinaryVector) -> Option<usize> {
    let mut set = layout.label_bits().filter(|&j| v.get(j) == 1);
    let first = set.next()?;
    set.next().is_none().then_some(first - layout.n_pixels)
}

pub fn pixels_of(layout: Layout, v: &BinaryVector) -> BinaryVector {
    BinaryVector::from_bits(v.as_slice()[..layout.n_pixels].iter().copied())
}

/// Keeps patterns whose label is in `classes`, preserving order.
pub fn filter_classes(d: &Dataset, classes: &BTreeSet<usize>) -> Result<Dataset> {
    if classes.is_empty() {
        return Err(Error::EmptyInput("class selection"));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= d.layout.n_classes) {
        return Err(Error::InvalidArgument(format!("class {bad} out of range")));
    }
    let patterns: Vec<_> = d
        .patterns
        .iter()
        .filter(|p| classes.contains(&p.label))
        .cloned()
        .collect();
    if patterns.is_empty() {
        return Err(Error::EmptySelection(classes.iter().copied().collect()));
    }
    Ok(Dataset {
        layout: d.layout,
        patterns,
        split: d.split,
    })
}

/// Writes patterns back out in the ingest CSV format (pixels as 0/1 intensities).
pub fn write_digits_csv(d: &Dataset, mut out: impl std::io::Write) -> Result<()> {
    for p in &d.patterns {
        let mut line = p
            .pixels
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(",");
        line.push(',');
        line.push_str(&p.label.to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}
