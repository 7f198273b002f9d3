//! End-to-end runs: split, dictionaries, features, normalization, SVM
//! training and evaluation, plus the ablation harness.

mod ablation;
mod config;

pub use ablation::{
    run_ablation, AblationAxis, AblationGrid, AblationTable, AblationValue, CorpusSource,
};
pub use config::{ConfigOverrides, PipelineConfig};

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{cross_validate, train_multiclass, EvalReport, MulticlassModel};
use crate::dictionary::{self, CategoryDictionary};
use crate::features::export::FeatureTable;
use crate::features::{
    featurize_all, semantic_sets, DictionarySet, FeatureParams, FeatureVector, NormalizationModel,
};
use crate::ingest::{parse_corpus, split_corpus, Corpus, ParseOptions, Split};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn stage<E>(stage: &'static str) -> impl FnOnce(E) -> PipelineError
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        move |e| PipelineError::Stage {
            stage,
            source: Box::new(e),
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Min-max normalization plus the one-vs-one classifier trained on
/// normalized vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub normalization: NormalizationModel,
    pub classifier: MulticlassModel,
}

impl TrainedModel {
    /// Fit normalization on `train` and train the classifier.
    pub fn fit(
        train: &[FeatureVector],
        categories: &[String],
        smo: &crate::classify::SmoParams,
    ) -> Result<Self> {
        let normalization = NormalizationModel::fit(train.iter().map(|v| v.values.as_slice()))
            .map_err(PipelineError::stage("normalize"))?;
        let (xs, ys) = normalized_xy(train, categories, &normalization)?;
        let classifier =
            train_multiclass(&xs, &ys, categories, smo).map_err(PipelineError::stage("train"))?;
        Ok(TrainedModel {
            normalization,
            classifier,
        })
    }

    pub fn evaluate(&self, test: &[FeatureVector]) -> Result<EvalReport> {
        let categories = &self.classifier.categories;
        let (xs, truth) = normalized_xy(test, categories, &self.normalization)?;
        let predicted = xs
            .iter()
            .map(|x| self.classifier.predict(x))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(PipelineError::stage("eval"))?;
        Ok(EvalReport::from_predictions(categories, &truth, &predicted))
    }
}

fn label_indices(vectors: &[FeatureVector], categories: &[String]) -> Result<Vec<usize>> {
    vectors
        .iter()
        .map(|v| {
            categories
                .iter()
                .position(|c| c == &v.label)
                .ok_or_else(|| {
                    PipelineError::Config(format!(
                        "vector {:?} has unknown category {:?}",
                        v.image_id, v.label
                    ))
                })
        })
        .collect()
}

fn normalized_xy(
    vectors: &[FeatureVector],
    categories: &[String],
    norm: &NormalizationModel,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let ys = label_indices(vectors, categories)?;
    let xs = vectors
        .iter()
        .map(|v| norm.transform(&v.values))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(PipelineError::stage("normalize"))?;
    Ok((xs, ys))
}

/// Cross-validate raw (unnormalized) feature vectors.
pub fn cross_validate_features(
    vectors: &[FeatureVector],
    categories: &[String],
    folds: usize,
    seed: u64,
    smo: &crate::classify::SmoParams,
) -> Result<EvalReport> {
    let ys = label_indices(vectors, categories)?;
    let xs: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    cross_validate(&xs, &ys, categories, folds, seed, smo)
        .map_err(PipelineError::stage("cross-validate"))
}

/// Held-out test evaluation and, when enabled, cross-validation over the
/// training split, reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub delta: String,
    pub n_train: usize,
    pub n_test: usize,
    pub test: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cross_validation: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub categories: Vec<String>,
    pub dictionaries: DictionarySet,
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
    pub model: TrainedModel,
    pub report: PipelineReport,
    /// The corpus features were computed from, with its split applied.
    pub feature_corpus: Corpus,
}

pub fn load_corpus(path: &Path, cfg: &PipelineConfig) -> Result<Corpus> {
    let file = File::open(path).map_err(PipelineError::io(path))?;
    parse_corpus(
        BufReader::new(file),
        ParseOptions {
            k_tags: cfg.k_tags,
            n_slices: cfg.n_slices,
        },
    )
    .map_err(PipelineError::stage("ingest"))
}

/// Build all category dictionaries from the training split of `corpus`.
pub fn build_dictionaries(corpus: &Corpus, cfg: &PipelineConfig) -> Result<DictionarySet> {
    let dicts: Vec<CategoryDictionary> = dictionary::build_all(corpus, cfg.max_images, cfg.pattern)
        .map_err(PipelineError::stage("dictionary"))?;
    DictionarySet::new(&corpus.categories, dicts).map_err(PipelineError::stage("dictionary"))
}

pub fn featurize_split(
    corpus: &Corpus,
    dicts: &DictionarySet,
    params: &FeatureParams,
    split: Split,
) -> Vec<FeatureVector> {
    let images: Vec<_> = corpus
        .images
        .iter()
        .filter(|im| im.split == split)
        .collect();
    featurize_all(images, dicts, params)
}

/// Run every stage in memory. `dict_corpus` feeds the dictionaries and
/// `feature_corpus` the feature vectors; both are re-split with the
/// configured seed. They are usually the same corpus.
pub fn execute(
    dict_corpus: &Corpus,
    feature_corpus: &Corpus,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    if dict_corpus.categories != feature_corpus.categories {
        return Err(PipelineError::Config(
            "dictionary and feature corpora must share the same category order".into(),
        ));
    }
    let dict_split = split_corpus(dict_corpus, cfg.train_fraction, cfg.seed)
        .map_err(PipelineError::stage("split"))?;
    let feature_split = if std::ptr::eq(dict_corpus, feature_corpus) {
        dict_split.clone()
    } else {
        split_corpus(feature_corpus, cfg.train_fraction, cfg.seed)
            .map_err(PipelineError::stage("split"))?
    };

    let dicts = build_dictionaries(&dict_split, cfg)?;
    let train = featurize_split(&feature_split, &dicts, &cfg.features, Split::Train);
    let test = featurize_split(&feature_split, &dicts, &cfg.features, Split::Test);

    let categories = feature_split.categories.clone();
    let model = TrainedModel::fit(&train, &categories, &cfg.smo)?;
    let test_report = model.evaluate(&test)?;
    let cross_validation = if cfg.folds >= 2 {
        Some(cross_validate_features(
            &train,
            &categories,
            cfg.folds,
            cfg.seed,
            &cfg.smo,
        )?)
    } else {
        None
    };

    let report = PipelineReport {
        seed: cfg.seed,
        delta: cfg.features.delta.to_string(),
        n_train: train.len(),
        n_test: test.len(),
        test: test_report,
        cross_validation,
    };
    Ok(PipelineOutcome {
        categories,
        dictionaries: dicts,
        train,
        test,
        model,
        report,
        feature_corpus: feature_split,
    })
}

/// Write a JSON value with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(PipelineError::io(path))
}

pub fn write_features(path: &Path, table: &FeatureTable, cfg: &PipelineConfig) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    }
    let file = File::create(path).map_err(PipelineError::io(path))?;
    let mut out = BufWriter::new(file);
    table
        .write(cfg.format, &mut out)
        .map_err(PipelineError::stage("export"))?;
    out.flush().map_err(PipelineError::io(path))
}

/// Dump the semantic objects of every image against every dictionary as
/// JSONL, one line per (image, category).
pub fn write_trace(
    path: &Path,
    corpus: &Corpus,
    dicts: &DictionarySet,
    params: &FeatureParams,
) -> Result<()> {
    let file = File::create(path).map_err(PipelineError::io(path))?;
    let mut out = BufWriter::new(file);
    for image in &corpus.images {
        for set in semantic_sets(image, dicts, params) {
            serde_json::to_writer(&mut out, &set).expect("trace serializes");
            out.write_all(b"\n").map_err(PipelineError::io(path))?;
        }
    }
    out.flush().map_err(PipelineError::io(path))
}

/// Paths written by [`run_pipeline`], relative to `out_dir`.
pub mod layout {
    pub const REPORT: &str = "report.json";
    pub const MODEL: &str = "model.json";
    pub const FEATURES_DIR: &str = "features";
}

/// Execute the full pipeline on `cfg.corpus` and write dictionaries,
/// feature files, model and report under `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let path = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| PipelineError::Config("no corpus given".into()))?;
    let corpus = load_corpus(path, cfg)?;
    let outcome = execute(&corpus, &corpus, cfg)?;

    dictionary::save_all(&cfg.dict_dir, outcome.dictionaries.entries())
        .map_err(PipelineError::stage("dictionary"))?;
    let dim = outcome.train.first().map_or(0, |v| v.values.len());
    let features_dir = cfg.out_dir.join(layout::FEATURES_DIR);
    for (name, vectors) in [("train", &outcome.train), ("test", &outcome.test)] {
        let table = FeatureTable::new(outcome.categories.clone(), dim, vectors.clone());
        let file = features_dir.join(format!("{name}.{}", cfg.format.extension()));
        write_features(&file, &table, cfg)?;
    }
    write_json(&cfg.out_dir.join(layout::MODEL), &outcome.model)?;
    write_json(&cfg.out_dir.join(layout::REPORT), &outcome.report)?;
    if let Some(trace) = &cfg.trace {
        write_trace(
            trace,
            &outcome.feature_corpus,
            &outcome.dictionaries,
            &cfg.features,
        )?;
    }
    Ok(outcome.report)
}
