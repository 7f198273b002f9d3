//! Ablation grids: one pipeline run per (value, repeat) cell.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{execute, load_corpus, PipelineConfig, PipelineError, Result};
use crate::features::DeltaKind;
use crate::ingest::{generate_synthetic, Corpus, SyntheticSpec, VALID_SLICES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    DictionarySize,
    SubImages,
    Delta,
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::DictionarySize => "dictionary_size",
            AblationAxis::SubImages => "sub_images",
            AblationAxis::Delta => "delta",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dictionary_size" | "dict_size" => Ok(AblationAxis::DictionarySize),
            "sub_images" | "slices" => Ok(AblationAxis::SubImages),
            "delta" => Ok(AblationAxis::Delta),
            _ => Err(format!(
                "unknown axis {s:?}; expected dictionary_size, sub_images or delta"
            )),
        }
    }
}

/// One column of an ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum AblationValue {
    DictionarySize { max_images: usize, n_slices: usize },
    SubImages { n_slices: usize },
    Delta { delta: DeltaKind },
}

impl AblationValue {
    pub fn axis(&self) -> AblationAxis {
        match self {
            AblationValue::DictionarySize { .. } => AblationAxis::DictionarySize,
            AblationValue::SubImages { .. } => AblationAxis::SubImages,
            AblationValue::Delta { .. } => AblationAxis::Delta,
        }
    }

    /// Column header. Dictionary sizes are shown as token counts.
    pub fn column(&self, k_tags: usize) -> String {
        match self {
            AblationValue::DictionarySize {
                max_images,
                n_slices,
            } => (max_images * n_slices * k_tags).to_string(),
            AblationValue::SubImages { n_slices } => n_slices.to_string(),
            AblationValue::Delta { delta } => delta.name().to_string(),
        }
    }

    fn n_slices(&self) -> Option<usize> {
        match *self {
            AblationValue::DictionarySize { n_slices, .. }
            | AblationValue::SubImages { n_slices } => Some(n_slices),
            AblationValue::Delta { .. } => None,
        }
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        match *self {
            AblationValue::DictionarySize {
                max_images,
                n_slices,
            } => {
                cfg.max_images = max_images;
                cfg.n_slices = Some(n_slices);
            }
            AblationValue::SubImages { n_slices } => cfg.n_slices = Some(n_slices),
            AblationValue::Delta { delta } => cfg.features.delta = delta,
        }
    }

    /// Parse one value for `axis`. Dictionary sizes are written either as
    /// `max_images x n_slices` (e.g. `100x16`) or as a token total that is a
    /// multiple of `100 * k_tags`.
    pub fn parse(
        axis: AblationAxis,
        s: &str,
        k_tags: usize,
        divide_k: u32,
    ) -> std::result::Result<Self, String> {
        let s = s.trim();
        match axis {
            AblationAxis::Delta => Ok(AblationValue::Delta {
                delta: DeltaKind::parse(s, divide_k)?,
            }),
            AblationAxis::SubImages => {
                let n: usize = s
                    .parse()
                    .map_err(|_| format!("bad sub-image count {s:?}"))?;
                Ok(AblationValue::SubImages { n_slices: n })
            }
            AblationAxis::DictionarySize => {
                let (max_images, n_slices) = if let Some((a, b)) = s.split_once(['x', 'X']) {
                    let a = a
                        .trim()
                        .parse()
                        .map_err(|_| format!("bad image count in {s:?}"))?;
                    let b = b
                        .trim()
                        .parse()
                        .map_err(|_| format!("bad slice count in {s:?}"))?;
                    (a, b)
                } else {
                    let total: usize = s
                        .parse()
                        .map_err(|_| format!("bad dictionary size {s:?}"))?;
                    let per = 100 * k_tags;
                    if per == 0 || !total.is_multiple_of(per) {
                        return Err(format!(
                            "dictionary size {total} is not 100 images x slices x {k_tags} tags"
                        ));
                    }
                    (100, total / per)
                };
                Ok(AblationValue::DictionarySize {
                    max_images,
                    n_slices,
                })
            }
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if let Some(n) = self.n_slices() {
            if !VALID_SLICES.contains(&n) {
                return Err(format!("{n} sub-images; expected 9, 16 or 25"));
            }
        }
        if let AblationValue::DictionarySize { max_images: 0, .. } = self {
            return Err("max_images must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub axis: AblationAxis,
    pub values: Vec<AblationValue>,
    pub repeats: usize,
}

impl AblationGrid {
    /// The built-in values for `axis`: all six delta kinds, 9/16/25
    /// sub-images, or the 9000/16000/25000-token dictionary presets.
    pub fn preset(axis: AblationAxis, repeats: usize, divide_k: u32) -> Self {
        let values = match axis {
            AblationAxis::Delta => DeltaKind::all(divide_k)
                .into_iter()
                .map(|delta| AblationValue::Delta { delta })
                .collect(),
            AblationAxis::SubImages => VALID_SLICES
                .iter()
                .map(|&n_slices| AblationValue::SubImages { n_slices })
                .collect(),
            AblationAxis::DictionarySize => VALID_SLICES
                .iter()
                .map(|&n_slices| AblationValue::DictionarySize {
                    max_images: 100,
                    n_slices,
                })
                .collect(),
        };
        AblationGrid {
            axis,
            values,
            repeats,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.values.is_empty() {
            return bad(format!("no values for axis {}", self.axis));
        }
        for v in &self.values {
            if v.axis() != self.axis {
                return bad(format!("value {v:?} does not belong to axis {}", self.axis));
            }
            v.validate().or_else(bad)?;
        }
        Ok(())
    }
}

/// Where each cell gets its corpus from.
#[derive(Debug, Clone)]
pub enum CorpusSource {
    /// A JSONL file. `{slices}` in the path is replaced by the cell's
    /// sub-image count.
    Path(String),
    /// Generated per cell; the sub-image axes override `spec.n_slices`.
    Synthetic {
        spec: SyntheticSpec,
        seed: u64,
    },
    Fixed(Corpus),
}

impl CorpusSource {
    fn corpus(&self, n_slices: Option<usize>, cfg: &PipelineConfig) -> Result<Corpus> {
        match self {
            CorpusSource::Path(pattern) => {
                let path = match n_slices {
                    Some(n) => pattern.replace("{slices}", &n.to_string()),
                    None => pattern.clone(),
                };
                load_corpus(Path::new(&path), cfg)
            }
            CorpusSource::Synthetic { spec, seed } => {
                let mut spec = spec.clone();
                if let Some(n) = n_slices {
                    spec.n_slices = n;
                }
                generate_synthetic(&spec, *seed).map_err(PipelineError::stage("ingest"))
            }
            CorpusSource::Fixed(corpus) => match n_slices {
                Some(n) if n != corpus.n_slices => Err(PipelineError::Config(format!(
                    "fixed corpus has {} sub-images per image, cell needs {n}",
                    corpus.n_slices
                ))),
                _ => Ok(corpus.clone()),
            },
        }
    }
}

/// Test accuracy per cell, `cells[repeat][value]`; failed cells hold the
/// error message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<std::result::Result<f64, String>>>,
}

impl AblationTable {
    /// Mean of the successful cells in each column; `None` when every cell
    /// in the column failed.
    pub fn averages(&self) -> Vec<Option<f64>> {
        (0..self.columns.len())
            .map(|j| {
                let ok: Vec<f64> = self
                    .cells
                    .iter()
                    .filter_map(|row| row[j].as_ref().ok().copied())
                    .collect();
                (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_err()).count()
    }

    fn cell_text(cell: &std::result::Result<f64, String>) -> String {
        match cell {
            Ok(v) => v.to_string(),
            Err(e) => format!("error: {e}"),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["repeat".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (r, row) in self.cells.iter().enumerate() {
            let mut rec = vec![(r + 1).to_string()];
            rec.extend(row.iter().map(Self::cell_text));
            w.write_record(&rec).expect("in-memory write");
        }
        let mut avg = vec!["average".to_string()];
        avg.extend(
            self.averages()
                .into_iter()
                .map(|a| a.map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&avg).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Aligned plain-text rendering with accuracies as percentages.
    pub fn to_text(&self) -> String {
        let fmt_cell = |c: &std::result::Result<f64, String>| match c {
            Ok(v) => format!("{:.2}", v * 100.0),
            Err(_) => "ERR".to_string(),
        };
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["repeat".to_string()];
        header.extend(self.columns.iter().cloned());
        rows.push(header);
        for (r, row) in self.cells.iter().enumerate() {
            let mut line = vec![(r + 1).to_string()];
            line.extend(row.iter().map(fmt_cell));
            rows.push(line);
        }
        let mut avg = vec!["average".to_string()];
        avg.extend(self.averages().into_iter().map(|a| match a {
            Some(v) => format!("{:.2}", v * 100.0),
            None => "ERR".to_string(),
        }));
        rows.push(avg);

        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    out.push_str("  ");
                }
                let _ = write!(out, "{cell:>w$}", w = widths[j]);
            }
            out.push('\n');
        }
        out
    }
}

/// Run every cell of `grid`. Repeat `r` uses split seed `base.seed + r`.
/// Cells run on the current rayon pool; a failing cell does not stop the
/// others.
pub fn run_ablation(
    base: &PipelineConfig,
    grid: &AblationGrid,
    source: &CorpusSource,
) -> Result<AblationTable> {
    grid.validate()?;
    let cells: Vec<(usize, usize)> = (0..grid.repeats)
        .flat_map(|r| (0..grid.values.len()).map(move |j| (r, j)))
        .collect();
    let results: Vec<std::result::Result<f64, String>> = cells
        .par_iter()
        .map(|&(r, j)| {
            let value = grid.values[j];
            let mut cfg = base.clone();
            value.apply(&mut cfg);
            cfg.seed = base.seed.wrapping_add(r as u64);
            // one held-out split per cell is enough for the table
            cfg.folds = 0;
            let corpus = source
                .corpus(value.n_slices(), &cfg)
                .map_err(|e| e.to_string())?;
            execute(&corpus, &corpus, &cfg)
                .map(|o| o.report.test.accuracy)
                .map_err(|e| {
                    log::warn!(
                        "ablation cell repeat {} value {:?} failed: {e}",
                        r + 1,
                        value
                    );
                    e.to_string()
                })
        })
        .collect();

    let mut rows = vec![Vec::with_capacity(grid.values.len()); grid.repeats];
    for ((r, _), res) in cells.into_iter().zip(results) {
        rows[r].push(res);
    }
    Ok(AblationTable {
        axis: grid.axis,
        columns: grid.values.iter().map(|v| v.column(base.k_tags)).collect(),
        cells: rows,
    })
}
