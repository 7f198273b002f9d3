//! Per-category raw dictionaries and objects-pattern dictionaries.
//!
//! A raw dictionary is the category's training tags concatenated in model
//! output order (image, sub-image, rank). The pattern dictionary counts
//! adjacent label pairs in that stream as unordered pairs and ranks them by
//! frequency.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{Corpus, Split};

/// Images per category used for a dictionary, as in the 100-image presets.
pub const DEFAULT_MAX_IMAGES: usize = 100;

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("category {0:?} has no training images")]
    NoEligibleImages(String),
    #[error("max_images must be at least 1")]
    InvalidMaxImages,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: inconsistent dictionary file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, DictionaryError>;

/// Label occurrence counts of a raw dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl LabelCounts {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut counts = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_ref().to_string()).or_insert(0) += 1;
        }
        LabelCounts {
            counts,
            total: tokens.len() as u64,
        }
    }

    pub fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let total = counts.values().sum();
        LabelCounts { counts, total }
    }

    pub fn count(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `count / total`, or 0 for an absent label or empty dictionary.
    pub fn probability(&self, label: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(label) as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDictionary {
    pub category: String,
    pub tokens: Vec<String>,
    pub counts: LabelCounts,
    /// Tokens per sub-image when built from a corpus; lets pattern
    /// building keep pairs inside one sub-image.
    pub segment_len: Option<usize>,
}

impl RawDictionary {
    pub fn from_tokens<S: AsRef<str>>(category: &str, tokens: &[S]) -> Self {
        RawDictionary {
            category: category.to_string(),
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            counts: LabelCounts::from_tokens(tokens),
            segment_len: None,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.total()
    }

    pub fn probability(&self, label: &str) -> f64 {
        self.counts.probability(label)
    }

    /// SHA-256 of the newline-joined token stream, hex encoded.
    pub fn tokens_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                hasher.update(b"\n");
            }
            hasher.update(t.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Concatenate the tags of the first `max_images` training images of
/// `category`, in corpus order, sub-image index order, then rank order.
pub fn build_raw_dictionary(
    corpus: &Corpus,
    category: &str,
    max_images: usize,
) -> Result<RawDictionary> {
    if max_images == 0 {
        return Err(DictionaryError::InvalidMaxImages);
    }
    if corpus.category_index(category).is_none() {
        return Err(DictionaryError::UnknownCategory(category.to_string()));
    }
    let eligible: Vec<_> = corpus
        .images_in(category)
        .filter(|im| im.split == Split::Train)
        .take(max_images)
        .collect();
    if eligible.is_empty() {
        return Err(DictionaryError::NoEligibleImages(category.to_string()));
    }

    let tokens: Vec<&str> = eligible.iter().flat_map(|im| im.labels()).collect();
    let mut raw = RawDictionary::from_tokens(category, &tokens);
    raw.segment_len = Some(corpus.k_tags);
    Ok(raw)
}

/// Unordered label pair, stored with `first <= second`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelPair {
    pub first: String,
    pub second: String,
}

impl LabelPair {
    pub fn new(a: &str, b: &str) -> Self {
        let (first, second) = if a <= b { (a, b) } else { (b, a) };
        LabelPair {
            first: first.to_string(),
            second: second.to_string(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.first == label || self.second == label
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternOptions {
    /// Count every adjacency from both of its endpoints (doubles all counts).
    pub count_both_directions: bool,
    /// Ignore adjacencies that cross a sub-image boundary.
    pub within_sub_image: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternDictionary {
    pub category: String,
    pairs: BTreeMap<LabelPair, u64>,
    ranked: Vec<(LabelPair, u64)>,
    /// Vertices in label order; a label's id is its index here.
    labels: Vec<String>,
    /// Edges per vertex id, sorted by neighbour id.
    adjacency: Vec<Vec<(usize, u64)>>,
}

impl PatternDictionary {
    /// Build from explicit pair frequencies; zero frequencies are dropped
    /// and self-pairs ignored.
    pub fn from_pairs<I>(category: &str, pairs: I) -> Self
    where
        I: IntoIterator<Item = (LabelPair, u64)>,
    {
        let mut map = BTreeMap::new();
        for (pair, freq) in pairs {
            if freq > 0 && pair.first != pair.second {
                *map.entry(pair).or_insert(0) += freq;
            }
        }
        let mut ranked: Vec<(LabelPair, u64)> = map.iter().map(|(p, f)| (p.clone(), *f)).collect();
        ranked.sort_by(|(pa, fa), (pb, fb)| fb.cmp(fa).then_with(|| pa.cmp(pb)));

        let labels: Vec<String> = map
            .keys()
            .flat_map(|p| [p.first.clone(), p.second.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let id = |l: &str| {
            labels
                .binary_search_by(|x| x.as_str().cmp(l))
                .expect("vertex")
        };
        let mut adjacency = vec![Vec::new(); labels.len()];
        for (pair, freq) in &map {
            let (a, b) = (id(&pair.first), id(&pair.second));
            adjacency[a].push((b, *freq));
            adjacency[b].push((a, *freq));
        }
        for edges in &mut adjacency {
            edges.sort_unstable();
        }

        PatternDictionary {
            category: category.to_string(),
            pairs: map,
            ranked,
            labels,
            adjacency,
        }
    }

    pub fn frequency(&self, a: &str, b: &str) -> u64 {
        self.pairs.get(&LabelPair::new(a, b)).copied().unwrap_or(0)
    }

    pub fn pairs(&self) -> &BTreeMap<LabelPair, u64> {
        &self.pairs
    }

    /// Pairs by frequency descending, ties by pair ascending.
    pub fn ranked(&self) -> &[(LabelPair, u64)] {
        &self.ranked
    }

    /// Direct neighbours of `label` in the pair graph, sorted by label.
    pub fn neighbors(&self, label: &str) -> impl Iterator<Item = (&str, u64)> + '_ {
        let edges = match self.label_id(label) {
            Some(v) => self.adjacency[v].as_slice(),
            None => &[],
        };
        edges.iter().map(|&(n, f)| (self.labels[n].as_str(), f))
    }

    pub fn contains_label(&self, label: &str) -> bool {
        self.label_id(label).is_some()
    }

    /// Number of labels that occur in at least one pair.
    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    /// Vertex id of `label`; ids follow label order.
    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|x| x.as_str().cmp(label)).ok()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    /// `(neighbour id, frequency)` edges of vertex `id`, by id.
    pub fn edges(&self, id: usize) -> &[(usize, u64)] {
        &self.adjacency[id]
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

/// Count adjacent distinct-label pairs of the raw token stream.
pub fn build_pattern_dictionary(raw: &RawDictionary, opts: PatternOptions) -> PatternDictionary {
    if raw.tokens.len() < 2 {
        log::warn!(
            "raw dictionary for {:?} has {} token(s); pattern dictionary is empty",
            raw.category,
            raw.tokens.len()
        );
        return PatternDictionary::from_pairs(&raw.category, std::iter::empty());
    }
    let step = if opts.count_both_directions { 2 } else { 1 };
    let mut counts: BTreeMap<LabelPair, u64> = BTreeMap::new();
    for (t, w) in raw.tokens.windows(2).enumerate() {
        if w[0] == w[1] {
            continue;
        }
        if opts.within_sub_image {
            if let Some(seg) = raw.segment_len.filter(|&s| s > 0) {
                if (t + 1) % seg == 0 {
                    continue;
                }
            }
        }
        *counts.entry(LabelPair::new(&w[0], &w[1])).or_insert(0) += step;
    }
    PatternDictionary::from_pairs(&raw.category, counts)
}

/// A category's label statistics and pattern dictionary; what feature
/// extraction needs once the token stream itself is no longer required.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDictionary {
    pub category: String,
    pub counts: LabelCounts,
    pub pattern: PatternDictionary,
    pub tokens_digest: String,
}

impl CategoryDictionary {
    pub fn from_raw(raw: &RawDictionary, opts: PatternOptions) -> Self {
        CategoryDictionary {
            category: raw.category.clone(),
            counts: raw.counts.clone(),
            pattern: build_pattern_dictionary(raw, opts),
            tokens_digest: raw.tokens_digest(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = DictionaryFile {
            category: self.category.clone(),
            tokens_sha256: self.tokens_digest.clone(),
            total: self.counts.total(),
            counts: self.counts.counts.clone(),
            pairs: self
                .pattern
                .ranked()
                .iter()
                .map(|(p, f)| PairEntry {
                    a: p.first.clone(),
                    b: p.second.clone(),
                    frequency: *f,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("dictionary serializes");
        s.push('\n');
        s
    }

    fn from_file(file: DictionaryFile, path: &Path) -> Result<Self> {
        let counts = LabelCounts::from_counts(file.counts);
        if counts.total() != file.total {
            return Err(DictionaryError::Corrupt {
                path: path.to_path_buf(),
                reason: format!("total {} != sum of counts {}", file.total, counts.total()),
            });
        }
        let pattern = PatternDictionary::from_pairs(
            &file.category,
            file.pairs
                .into_iter()
                .map(|e| (LabelPair::new(&e.a, &e.b), e.frequency)),
        );
        Ok(CategoryDictionary {
            category: file.category,
            counts,
            pattern,
            tokens_digest: file.tokens_sha256,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| DictionaryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: DictionaryFile =
            serde_json::from_str(&text).map_err(|source| DictionaryError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        Self::from_file(file, path)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DictionaryFile {
    category: String,
    tokens_sha256: String,
    total: u64,
    counts: BTreeMap<String, u64>,
    pairs: Vec<PairEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairEntry {
    a: String,
    b: String,
    frequency: u64,
}

/// Build dictionaries for every corpus category, in category order.
pub fn build_all(
    corpus: &Corpus,
    max_images: usize,
    opts: PatternOptions,
) -> Result<Vec<CategoryDictionary>> {
    corpus
        .categories
        .par_iter()
        .map(|cat| {
            let raw = build_raw_dictionary(corpus, cat, max_images)?;
            Ok(CategoryDictionary::from_raw(&raw, opts))
        })
        .collect()
}

/// File name used for a category inside a dictionary directory.
pub fn dictionary_file_name(category: &str) -> String {
    let safe: String = category
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

pub fn save_all(dir: &Path, dicts: &[CategoryDictionary]) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DictionaryError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for d in dicts {
        let path = dir.join(dictionary_file_name(&d.category));
        fs::write(&path, d.to_json()).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Load the dictionaries of `categories` from `dir`, in that order.
pub fn load_all(dir: &Path, categories: &[String]) -> Result<Vec<CategoryDictionary>> {
    categories
        .iter()
        .map(|cat| {
            let path = dir.join(dictionary_file_name(cat));
            let dict = CategoryDictionary::load(&path)?;
            if &dict.category != cat {
                return Err(DictionaryError::Corrupt {
                    path,
                    reason: format!("holds category {:?}, expected {cat:?}", dict.category),
                });
            }
            Ok(dict)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::image;

    fn pairs_of(p: &PatternDictionary) -> Vec<(&str, &str, u64)> {
        p.ranked()
            .iter()
            .map(|(pair, f)| (pair.first.as_str(), pair.second.as_str(), *f))
            .collect()
    }

    #[test]
    fn alternating_stream() {
        let raw = RawDictionary::from_tokens("c", &["a", "b", "a", "b", "c"]);
        let p = build_pattern_dictionary(&raw, PatternOptions::default());
        assert_eq!(pairs_of(&p), vec![("a", "b", 3), ("b", "c", 1)]);
    }

    #[test]
    fn self_pairs_skipped() {
        let raw = RawDictionary::from_tokens("c", &["a", "a"]);
        assert!(build_pattern_dictionary(&raw, PatternOptions::default()).is_empty());
    }

    #[test]
    fn single_pair() {
        let raw = RawDictionary::from_tokens("c", &["y", "x"]);
        let p = build_pattern_dictionary(&raw, PatternOptions::default());
        assert_eq!(pairs_of(&p), vec![("x", "y", 1)]);
    }

    #[test]
    fn short_stream_is_empty_not_error() {
        let raw = RawDictionary::from_tokens("c", &["a"]);
        assert!(build_pattern_dictionary(&raw, PatternOptions::default()).is_empty());
    }

    #[test]
    fn both_directions_doubles_counts() {
        let raw = RawDictionary::from_tokens("c", &["a", "b", "a", "b", "c"]);
        let opts = PatternOptions {
            count_both_directions: true,
            ..Default::default()
        };
        let p = build_pattern_dictionary(&raw, opts);
        assert_eq!(pairs_of(&p), vec![("a", "b", 6), ("b", "c", 2)]);
    }

    #[test]
    fn ranking_tie_break_is_lexicographic() {
        let raw = RawDictionary::from_tokens("c", &["d", "c", "b", "a"]);
        let p = build_pattern_dictionary(&raw, PatternOptions::default());
        assert_eq!(
            pairs_of(&p),
            vec![("a", "b", 1), ("b", "c", 1), ("c", "d", 1)]
        );
    }

    fn two_image_corpus() -> Corpus {
        Corpus {
            images: vec![
                image("1", "k", Split::Train, &[&["a", "b"]]),
                image("2", "k", Split::Test, &[&["z", "z"]]),
                image("3", "k", Split::Train, &[&["c"]]),
                image("4", "o", Split::Train, &[&["q"]]),
            ],
            categories: vec!["k".into(), "o".into()],
            n_slices: 1,
            k_tags: 2,
        }
    }

    #[test]
    fn raw_concatenates_training_images_in_order() {
        let raw = build_raw_dictionary(&two_image_corpus(), "k", 100).unwrap();
        assert_eq!(raw.tokens, vec!["a", "b", "c"]);
        assert_eq!(raw.total(), 3);
        assert_eq!(raw.counts.count("a"), 1);
        assert_eq!(raw.counts.count("z"), 0);
    }

    #[test]
    fn raw_respects_max_images() {
        let raw = build_raw_dictionary(&two_image_corpus(), "k", 1).unwrap();
        assert_eq!(raw.tokens, vec!["a", "b"]);
    }

    #[test]
    fn raw_errors() {
        let c = two_image_corpus();
        assert!(matches!(
            build_raw_dictionary(&c, "nope", 10),
            Err(DictionaryError::UnknownCategory(_))
        ));
        assert!(matches!(
            build_raw_dictionary(&c, "k", 0),
            Err(DictionaryError::InvalidMaxImages)
        ));
        let mut c = c;
        c.images[3].split = Split::Test;
        assert!(matches!(
            build_raw_dictionary(&c, "o", 10),
            Err(DictionaryError::NoEligibleImages(_))
        ));
    }

    #[test]
    fn within_sub_image_drops_boundary_pairs() {
        let mut raw = RawDictionary::from_tokens("c", &["a", "b", "c", "d"]);
        raw.segment_len = Some(2);
        let opts = PatternOptions {
            within_sub_image: true,
            ..Default::default()
        };
        let p = build_pattern_dictionary(&raw, opts);
        assert_eq!(pairs_of(&p), vec![("a", "b", 1), ("c", "d", 1)]);
    }

    #[test]
    fn one_image_nine_by_ten() {
        let labels: Vec<String> = (0..10).map(|i| format!("l{i}")).collect();
        let sub: Vec<&str> = labels.iter().map(String::as_str).collect();
        let subs = vec![sub.as_slice(); 9];
        let corpus = Corpus {
            images: vec![image("1", "k", Split::Train, &subs)],
            categories: vec!["k".into()],
            n_slices: 9,
            k_tags: 10,
        };
        assert_eq!(build_raw_dictionary(&corpus, "k", 100).unwrap().total(), 90);
    }

    #[test]
    fn probability_cases() {
        let raw = RawDictionary::from_tokens("c", &["a", "a", "b", "a"]);
        assert_eq!(raw.probability("a"), 0.75);
        assert_eq!(raw.probability("zzz"), 0.0);
        let uniform: Vec<String> = (0..16).map(|i| format!("u{i}")).collect();
        let raw = RawDictionary::from_tokens("c", &uniform);
        assert!(uniform.iter().all(|l| raw.probability(l) == 0.0625));
    }

    #[test]
    fn file_round_trip() {
        let raw = RawDictionary::from_tokens("kitchen", &["a", "b", "a", "c", "b"]);
        let dict = CategoryDictionary::from_raw(&raw, PatternOptions::default());
        let dir = tempfile::tempdir().unwrap();
        save_all(dir.path(), std::slice::from_ref(&dict)).unwrap();
        let loaded = load_all(dir.path(), &["kitchen".to_string()]).unwrap();
        assert_eq!(loaded[0], dict);
        assert_eq!(loaded[0].to_json(), dict.to_json());
    }

    #[test]
    fn digest_is_stable() {
        let raw = RawDictionary::from_tokens("c", &["a", "b"]);
        let mut h = Sha256::new();
        h.update(b"a\nb");
        assert_eq!(raw.tokens_digest(), hex::encode(h.finalize()));
    }
}
