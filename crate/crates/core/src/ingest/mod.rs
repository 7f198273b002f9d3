//! Tag-detection corpus: types, JSONL parsing/serialization, synthetic
//! generation and stratified train/test assignment.
//!
//! The ingestion unit is a per-image record holding the top-K object tags
//! (label + softmax score) for every sub-image of an n×n slicing. Nothing in
//! this crate touches pixels; the tag file is the boundary.

mod split;
mod synthetic;

pub use split::split_corpus;
pub use synthetic::{generate_synthetic, CategorySpec, SyntheticSpec};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of tags kept per sub-image.
pub const DEFAULT_K_TAGS: usize = 10;

/// Sub-image counts produced by 3×3, 4×4 and 5×5 grids.
pub const VALID_SLICES: [usize; 3] = [9, 16, 25];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: read failed: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, sub-image {sub_image}: expected {expected} tags, found {found}")]
    TagCount {
        line: usize,
        sub_image: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, sub-image {sub_image}: score {score} outside [0, 1]")]
    ScoreRange {
        line: usize,
        sub_image: usize,
        score: f64,
    },
    #[error("line {line}, sub-image {sub_image}: empty label")]
    EmptyLabel { line: usize, sub_image: usize },
    #[error("line {line}: image has {found} sub-images, corpus uses {expected}")]
    InconsistentSlices {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {found} sub-images is not a supported slicing (9, 16 or 25)")]
    UnsupportedSlices { line: usize, found: usize },
    #[error("line {line}: sub-image indices must be exactly 0..{n_slices} without duplicates")]
    SubImageIndices { line: usize, n_slices: usize },
    #[error("line {line}: duplicate image_id {image_id:?}")]
    DuplicateImage { line: usize, image_id: String },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("invalid synthetic spec: {0}")]
    Synthetic(String),
    #[error("invalid split: {0}")]
    Split(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// One detected object: a normalized label and its softmax score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRecord {
    pub label: String,
    pub score: f64,
}

impl TagRecord {
    pub fn new(label: &str, score: f64) -> Self {
        TagRecord {
            label: normalize_label(label),
            score,
        }
    }
}

/// Tags of one sub-image, ranked by score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubImageTags {
    pub index: usize,
    pub tags: Vec<TagRecord>,
}

impl SubImageTags {
    /// Sort tags by score descending, ties by label ascending.
    pub fn rank(&mut self) {
        self.tags.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.label.cmp(&b.label))
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub category: String,
    pub split: Split,
    pub sub_images: Vec<SubImageTags>,
}

impl ImageRecord {
    /// All tag labels in sub-image order, then rank order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.sub_images
            .iter()
            .flat_map(|s| s.tags.iter().map(|t| t.label.as_str()))
    }

    pub fn label_set(&self) -> BTreeSet<&str> {
        self.labels().collect()
    }
}

/// A validated collection of image records.
///
/// `categories` fixes the feature-vector axis order for the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub images: Vec<ImageRecord>,
    pub categories: Vec<String>,
    pub n_slices: usize,
    pub k_tags: usize,
}

impl Corpus {
    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    pub fn images_in<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ImageRecord> {
        self.images.iter().filter(move |im| im.category == category)
    }

    /// Write one JSON object per line; `parse_corpus` reads it back unchanged.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for image in &self.images {
            serde_json::to_writer(&mut out, image)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Lowercase and join whitespace-separated words with underscores, so
/// "Book Jacket" and "book_jacket" name the same object.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub k_tags: usize,
    /// When set, every image must carry exactly this many sub-images.
    pub n_slices: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            k_tags: DEFAULT_K_TAGS,
            n_slices: None,
        }
    }
}

/// Parse and validate a JSONL corpus.
///
/// Blank lines are skipped. Labels are normalized, tags re-ranked, and
/// sub-images ordered by index. Category order is first appearance.
pub fn parse_corpus<R: BufRead>(reader: R, opts: ParseOptions) -> Result<Corpus> {
    let mut images = Vec::new();
    let mut categories: Vec<String> = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut n_slices = opts.n_slices;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            line: line_no,
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut image: ImageRecord =
            serde_json::from_str(&line).map_err(|source| IngestError::Json {
                line: line_no,
                source,
            })?;
        validate_image(&mut image, line_no, opts.k_tags, &mut n_slices)?;

        if !seen_ids.insert(image.image_id.clone()) {
            return Err(IngestError::DuplicateImage {
                line: line_no,
                image_id: image.image_id,
            });
        }
        if !categories.contains(&image.category) {
            categories.push(image.category.clone());
        }
        images.push(image);
    }

    Ok(Corpus {
        images,
        categories,
        n_slices: n_slices.unwrap_or(0),
        k_tags: opts.k_tags,
    })
}

pub fn parse_corpus_str(text: &str, opts: ParseOptions) -> Result<Corpus> {
    parse_corpus(text.as_bytes(), opts)
}

fn validate_image(
    image: &mut ImageRecord,
    line: usize,
    k_tags: usize,
    n_slices: &mut Option<usize>,
) -> Result<()> {
    if image.image_id.is_empty() {
        return Err(IngestError::EmptyField {
            line,
            field: "image_id",
        });
    }
    if image.category.is_empty() {
        return Err(IngestError::EmptyField {
            line,
            field: "category",
        });
    }

    let found = image.sub_images.len();
    if !VALID_SLICES.contains(&found) {
        return Err(IngestError::UnsupportedSlices { line, found });
    }
    match *n_slices {
        Some(expected) if expected != found => {
            return Err(IngestError::InconsistentSlices {
                line,
                expected,
                found,
            })
        }
        Some(_) => {}
        None => *n_slices = Some(found),
    }

    image.sub_images.sort_by_key(|s| s.index);
    if image
        .sub_images
        .iter()
        .enumerate()
        .any(|(pos, s)| s.index != pos)
    {
        return Err(IngestError::SubImageIndices {
            line,
            n_slices: found,
        });
    }

    for sub in &mut image.sub_images {
        if sub.tags.len() != k_tags {
            return Err(IngestError::TagCount {
                line,
                sub_image: sub.index,
                expected: k_tags,
                found: sub.tags.len(),
            });
        }
        for tag in &mut sub.tags {
            if !(0.0..=1.0).contains(&tag.score) {
                return Err(IngestError::ScoreRange {
                    line,
                    sub_image: sub.index,
                    score: tag.score,
                });
            }
            tag.label = normalize_label(&tag.label);
            if tag.label.is_empty() {
                return Err(IngestError::EmptyLabel {
                    line,
                    sub_image: sub.index,
                });
            }
        }
        sub.rank();
    }
    Ok(())
}
