//! Pipeline configuration.
//!
//! [`ConfigOverrides`] is the loose form read from a flat `key = value`
//! file or from command-line flags; [`ConfigOverrides::resolve`] validates
//! every field and produces a typed [`PipelineConfig`] before any stage
//! touches the filesystem.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classify::SmoParams;
use crate::dictionary::{PatternOptions, DEFAULT_MAX_IMAGES};
use crate::features::export::FeatureFormat;
use crate::features::{DeltaKind, FeatureParams, Layout, DEFAULT_DIVIDE_EXPONENT};
use crate::ingest::{DEFAULT_K_TAGS, VALID_SLICES};
use crate::semantic::{PropositionSet, DEFAULT_K_CAND, DEFAULT_S_SEM};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub corpus: Option<PathBuf>,
    pub dict_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub slices: Option<usize>,
    pub k_tags: Option<usize>,
    pub max_images: Option<usize>,
    pub count_both_directions: Option<bool>,
    pub within_subimage: Option<bool>,
    pub k_cand: Option<usize>,
    pub s_sem: Option<usize>,
    pub propositions: Option<String>,
    pub delta: Option<String>,
    pub divide_k: Option<u32>,
    pub layout: Option<String>,
    pub format: Option<String>,
    pub train_fraction: Option<f64>,
    pub folds: Option<usize>,
    pub c: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub trace: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        ConfigOverrides { $($field: $top.$field.or($base.$field)),* }
    };
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Fields set in `top` win over fields set in `self`.
    pub fn overlay(self, top: ConfigOverrides) -> ConfigOverrides {
        let base = self;
        overlay!(base, top;
            corpus, dict_dir, out_dir, slices, k_tags, max_images,
            count_both_directions, within_subimage, k_cand, s_sem, propositions,
            delta, divide_k, layout, format, train_fraction, folds, c, tol, seed, trace,
        )
    }

    pub fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let cfg_err = |msg: String| PipelineError::Config(msg);

        let n_slices = self.slices;
        if let Some(s) = n_slices {
            if !VALID_SLICES.contains(&s) {
                return Err(cfg_err(format!("slices = {s} must be 9, 16 or 25")));
            }
        }
        let k_tags = self.k_tags.unwrap_or(DEFAULT_K_TAGS);
        if k_tags == 0 {
            return Err(cfg_err("k_tags must be at least 1".into()));
        }
        let max_images = self.max_images.unwrap_or(DEFAULT_MAX_IMAGES);
        if max_images == 0 {
            return Err(cfg_err("max_images must be at least 1".into()));
        }
        let k_cand = self.k_cand.unwrap_or(DEFAULT_K_CAND);
        if k_cand == 0 {
            return Err(cfg_err("k_cand must be at least 1".into()));
        }
        let s_sem = self.s_sem.unwrap_or(DEFAULT_S_SEM);
        if s_sem == 0 {
            return Err(cfg_err("s_sem must be at least 1".into()));
        }
        let modes = match &self.propositions {
            Some(p) => p.parse::<PropositionSet>().map_err(cfg_err)?,
            None => PropositionSet::default(),
        };
        let divide_k = self.divide_k.unwrap_or(DEFAULT_DIVIDE_EXPONENT);
        let delta = match &self.delta {
            Some(d) => DeltaKind::parse(d, divide_k).map_err(cfg_err)?,
            None => DeltaKind::Normal,
        };
        let layout = match &self.layout {
            Some(l) => l.parse::<Layout>().map_err(cfg_err)?,
            None => Layout::Summed,
        };
        let format = match &self.format {
            Some(f) => f.parse::<FeatureFormat>().map_err(cfg_err)?,
            None => FeatureFormat::Csv,
        };
        let train_fraction = self.train_fraction.unwrap_or(0.8);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(cfg_err(format!(
                "train_fraction = {train_fraction} must lie strictly between 0 and 1"
            )));
        }
        let folds = self.folds.unwrap_or(10);
        if folds == 1 {
            return Err(cfg_err("folds must be 0 (disabled) or at least 2".into()));
        }
        let smo = SmoParams {
            c: self.c.unwrap_or(1.0),
            tol: self.tol.unwrap_or(1e-3),
            ..SmoParams::default()
        };
        smo.validate().map_err(|e| cfg_err(e.to_string()))?;

        let out_dir = self
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("semfeat-out"));
        let dict_dir = self
            .dict_dir
            .clone()
            .unwrap_or_else(|| out_dir.join("dict"));

        Ok(PipelineConfig {
            corpus: self.corpus.clone(),
            dict_dir,
            out_dir,
            n_slices,
            k_tags,
            max_images,
            pattern: PatternOptions {
                count_both_directions: self.count_both_directions.unwrap_or(false),
                within_sub_image: self.within_subimage.unwrap_or(false),
            },
            features: FeatureParams {
                k_cand,
                s_sem,
                modes,
                delta,
                layout,
            },
            format,
            train_fraction,
            folds,
            smo,
            seed: self.seed.unwrap_or(0),
            trace: self.trace.clone(),
        })
    }
}

/// Validated settings for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub dict_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Expected sub-images per image; checked against the corpus.
    pub n_slices: Option<usize>,
    pub k_tags: usize,
    pub max_images: usize,
    pub pattern: PatternOptions,
    pub features: FeatureParams,
    pub format: FeatureFormat,
    pub train_fraction: f64,
    /// 0 disables cross-validation.
    pub folds: usize,
    pub smo: SmoParams,
    pub seed: u64,
    pub trace: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        ConfigOverrides::default()
            .resolve()
            .expect("defaults are valid")
    }
}
