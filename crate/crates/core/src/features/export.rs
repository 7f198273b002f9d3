//! Feature files: CSV (`image_id,label,v1..vm`) and a sparse svmlight-style
//! format (`<label-index> <attr>:<value> ...`, attributes 1-based).
//!
//! The svmlight variant starts with two comment lines naming the category
//! axis and the dimension, and carries the image id as a trailing comment,
//! so a file can be read back without the corpus:
//!
//! ```text
//! # categories: ["bar","office"]
//! # dim: 2
//! 1 1:0.25 # office_0001
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureVector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    #[default]
    Csv,
    Svmlight,
}

impl FeatureFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FeatureFormat::Csv => "csv",
            FeatureFormat::Svmlight => "svm",
        }
    }
}

impl fmt::Display for FeatureFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureFormat::Csv => "csv",
            FeatureFormat::Svmlight => "svmlight",
        })
    }
}

impl FromStr for FeatureFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(FeatureFormat::Csv),
            "svmlight" => Ok(FeatureFormat::Svmlight),
            other => Err(format!(
                "unknown format {other:?} (expected csv or svmlight)"
            )),
        }
    }
}

/// Feature vectors plus the category axis they are labelled against.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub categories: Vec<String>,
    pub dim: usize,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn new(categories: Vec<String>, dim: usize, vectors: Vec<FeatureVector>) -> Self {
        FeatureTable {
            categories,
            dim,
            vectors,
        }
    }

    pub fn write<W: Write>(&self, format: FeatureFormat, out: W) -> Result<(), FeatureError> {
        match format {
            FeatureFormat::Csv => self.write_csv(out),
            FeatureFormat::Svmlight => self.write_svmlight(out),
        }
    }

    pub fn to_string(&self, format: FeatureFormat) -> String {
        let mut buf = Vec::new();
        self.write(format, &mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("feature files are UTF-8")
    }

    fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["image_id".to_string(), "label".to_string()];
        header.extend((1..=self.dim).map(|k| format!("v{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for v in &self.vectors {
            let mut row = vec![v.image_id.clone(), v.label.clone()];
            row.extend(v.values.iter().map(|x| format!("{x:?}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_svmlight<W: Write>(&self, mut out: W) -> Result<(), FeatureError> {
        writeln!(
            out,
            "# categories: {}",
            serde_json::to_string(&self.categories).expect("strings serialize")
        )?;
        writeln!(out, "# dim: {}", self.dim)?;
        for v in &self.vectors {
            let idx = self
                .categories
                .iter()
                .position(|c| c == &v.label)
                .ok_or_else(|| {
                    FeatureError::Format(format!("label {:?} is not a known category", v.label))
                })?;
            write!(out, "{idx}")?;
            for (k, x) in v.values.iter().enumerate() {
                if *x != 0.0 {
                    write!(out, " {}:{:?}", k + 1, x)?;
                }
            }
            writeln!(out, " # {}", v.image_id)?;
        }
        Ok(())
    }

    /// Read either format; a leading `#` selects svmlight.
    pub fn read<R: BufRead>(mut reader: R) -> Result<Self, FeatureError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        if text.trim_start().starts_with('#') {
            Self::parse_svmlight(&text)
        } else {
            Self::parse_csv(&text)
        }
    }

    fn parse_csv(text: &str) -> Result<Self, FeatureError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 2 || &header[0] != "image_id" || &header[1] != "label" {
            return Err(FeatureError::Format(
                "CSV header must start with image_id,label".into(),
            ));
        }
        let dim = header.len() - 2;
        let mut categories: Vec<String> = Vec::new();
        let mut vectors = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let values = rec
                .iter()
                .skip(2)
                .map(|s| {
                    s.parse::<f64>().map_err(|e| {
                        FeatureError::Format(format!("row {}: bad value {s:?}: {e}", row + 2))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let label = rec[1].to_string();
            if !categories.contains(&label) {
                categories.push(label.clone());
            }
            vectors.push(FeatureVector {
                image_id: rec[0].to_string(),
                values,
                label,
            });
        }
        Ok(FeatureTable::new(categories, dim, vectors))
    }

    fn parse_svmlight(text: &str) -> Result<Self, FeatureError> {
        let mut categories: Option<Vec<String>> = None;
        let mut dim: Option<usize> = None;
        let mut vectors = Vec::new();
        let bad = |line: usize, msg: String| FeatureError::Format(format!("line {line}: {msg}"));

        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(json) = rest.strip_prefix("categories:") {
                    categories = Some(
                        serde_json::from_str(json.trim())
                            .map_err(|e| bad(n, format!("bad categories header: {e}")))?,
                    );
                } else if let Some(d) = rest.strip_prefix("dim:") {
                    dim = Some(
                        d.trim()
                            .parse()
                            .map_err(|e| bad(n, format!("bad dim header: {e}")))?,
                    );
                }
                continue;
            }
            let cats = categories
                .as_ref()
                .ok_or_else(|| bad(n, "missing '# categories:' header".into()))?;
            let dim = dim.ok_or_else(|| bad(n, "missing '# dim:' header".into()))?;
            let (body, image_id) = match line.split_once('#') {
                Some((b, id)) => (b.trim(), id.trim().to_string()),
                None => (line, format!("row_{}", vectors.len())),
            };
            let mut fields = body.split_whitespace();
            let idx: usize = fields
                .next()
                .ok_or_else(|| bad(n, "empty record".into()))?
                .parse()
                .map_err(|e| bad(n, format!("bad label index: {e}")))?;
            let label = cats
                .get(idx)
                .ok_or_else(|| bad(n, format!("label index {idx} out of range")))?
                .clone();
            let mut values = vec![0.0; dim];
            for f in fields {
                let (k, x) = f
                    .split_once(':')
                    .ok_or_else(|| bad(n, format!("bad attribute {f:?}")))?;
                let k: usize = k
                    .parse()
                    .map_err(|e| bad(n, format!("bad attribute index: {e}")))?;
                if k == 0 || k > dim {
                    return Err(bad(n, format!("attribute {k} outside 1..={dim}")));
                }
                values[k - 1] = x.parse().map_err(|e| bad(n, format!("bad value: {e}")))?;
            }
            vectors.push(FeatureVector {
                image_id,
                values,
                label,
            });
        }
        Ok(FeatureTable::new(
            categories.unwrap_or_default(),
            dim.unwrap_or(0),
            vectors,
        ))
    }
}

fn csv_err(e: csv::Error) -> FeatureError {
    FeatureError::Format(e.to_string())
}
