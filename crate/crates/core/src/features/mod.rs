//! Semantic feature vectors: per-category fusion of delta weights and
//! dictionary probabilities over an image's semantic objects, plus
//! attribute-level normalization and feature-file formats.

mod delta;
pub mod export;
mod normalize;

pub use delta::{delta, DeltaKind, ProbabilityContext, DEFAULT_DIVIDE_EXPONENT};
pub use normalize::{apply_normalization, fit_normalization, NormalizationModel};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::CategoryDictionary;
use crate::ingest::ImageRecord;
use crate::semantic::{
    extract_semantic_objects, select_candidates, PropositionSet, SemanticObjectSet, DEFAULT_K_CAND,
    DEFAULT_S_SEM,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no dictionary for category {0:?}")]
    MissingDictionary(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("cannot fit normalization on an empty training set")]
    EmptyTrainingSet,
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the per-object terms become a vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// One value per category: the sum of that category's terms.
    #[default]
    Summed,
    /// `s_sem` slots per category, one term each, zero padded.
    PerObject,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Summed => "summed",
            Layout::PerObject => "per-object",
        })
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "summed" => Ok(Layout::Summed),
            "per-object" => Ok(Layout::PerObject),
            other => Err(format!(
                "unknown layout {other:?} (expected summed or per-object)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub k_cand: usize,
    pub s_sem: usize,
    pub modes: PropositionSet,
    pub delta: DeltaKind,
    pub layout: Layout,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            k_cand: DEFAULT_K_CAND,
            s_sem: DEFAULT_S_SEM,
            modes: PropositionSet::default(),
            delta: DeltaKind::Normal,
            layout: Layout::Summed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub values: Vec<f64>,
    pub label: String,
}

/// Dictionaries aligned with the corpus category axis.
#[derive(Debug, Clone)]
pub struct DictionarySet {
    entries: Vec<CategoryDictionary>,
}

impl DictionarySet {
    /// Order `dicts` by `categories`; every category needs a dictionary.
    pub fn new(
        categories: &[String],
        dicts: Vec<CategoryDictionary>,
    ) -> Result<Self, FeatureError> {
        let mut pool: Vec<Option<CategoryDictionary>> = dicts.into_iter().map(Some).collect();
        let mut entries = Vec::with_capacity(categories.len());
        for cat in categories {
            let slot = pool
                .iter_mut()
                .find(|d| d.as_ref().is_some_and(|d| &d.category == cat))
                .ok_or_else(|| FeatureError::MissingDictionary(cat.clone()))?;
            entries.push(slot.take().expect("slot matched above"));
        }
        Ok(DictionarySet { entries })
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|d| d.category.as_str())
    }

    pub fn entries(&self) -> &[CategoryDictionary] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Semantic objects of `image` against every category dictionary.
pub fn semantic_sets(
    image: &ImageRecord,
    dicts: &DictionarySet,
    params: &FeatureParams,
) -> Vec<SemanticObjectSet> {
    let cands = select_candidates(image, params.k_cand);
    let raw_labels: BTreeSet<&str> = image.label_set();
    dicts
        .entries
        .iter()
        .map(|d| {
            extract_semantic_objects(&d.pattern, &cands, &raw_labels, params.s_sem, params.modes)
        })
        .collect()
}

/// Feature vector of one image: for category `i`, the sum over its
/// semantic objects `o` of `delta(o) * p(o | D_i)`.
pub fn featurize(
    image: &ImageRecord,
    dicts: &DictionarySet,
    params: &FeatureParams,
) -> FeatureVector {
    let sets = semantic_sets(image, dicts, params);
    let ctx =
        ProbabilityContext::from_counts(sets.iter().zip(&dicts.entries).flat_map(|(w, d)| {
            w.objects
                .iter()
                .map(|o| (d.counts.count(&o.label), d.counts.total()))
        }));

    let values = match params.layout {
        Layout::Summed => sets
            .iter()
            .zip(&dicts.entries)
            .map(|(w, d)| {
                w.objects
                    .iter()
                    .map(|o| term(params.delta, d, &o.label, &ctx))
                    // an empty f64 sum is -0.0
                    .fold(0.0, |acc, t| acc + t)
            })
            .collect(),
        Layout::PerObject => {
            let mut values = vec![0.0; dicts.len() * params.s_sem];
            for (i, (w, d)) in sets.iter().zip(&dicts.entries).enumerate() {
                for (j, o) in w.objects.iter().enumerate() {
                    values[i * params.s_sem + j] = term(params.delta, d, &o.label, &ctx);
                }
            }
            values
        }
    };

    FeatureVector {
        image_id: image.image_id.clone(),
        values,
        label: image.category.clone(),
    }
}

fn term(kind: DeltaKind, dict: &CategoryDictionary, label: &str, ctx: &ProbabilityContext) -> f64 {
    delta(kind, &dict.counts, label, ctx) * dict.counts.probability(label)
}

/// Featurize many images in parallel; output order follows input order.
pub fn featurize_all<'a, I>(
    images: I,
    dicts: &DictionarySet,
    params: &FeatureParams,
) -> Vec<FeatureVector>
where
    I: IntoParallelIterator<Item = &'a ImageRecord>,
    I::Iter: IndexedParallelIterator,
{
    images
        .into_par_iter()
        .map(|im| featurize(im, dicts, params))
        .collect()
}
