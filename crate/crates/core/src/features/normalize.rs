use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureVector};

/// Per-attribute min/max learned on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationModel {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl NormalizationModel {
    /// Componentwise extrema over `rows`.
    pub fn fit<'a, I>(rows: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut rows = rows.into_iter();
        let first = rows.next().ok_or(FeatureError::EmptyTrainingSet)?;
        let mut mins = first.to_vec();
        let mut maxs = first.to_vec();
        for row in rows {
            if row.len() != mins.len() {
                return Err(FeatureError::Dimension {
                    expected: mins.len(),
                    found: row.len(),
                });
            }
            for (k, &x) in row.iter().enumerate() {
                mins[k] = mins[k].min(x);
                maxs[k] = maxs[k].max(x);
            }
        }
        Ok(NormalizationModel { mins, maxs })
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// Map each attribute to `(x - min) / (max - min)` clipped to `[0, 1]`;
    /// constant attributes map to 0.
    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if values.len() != self.dim() {
            return Err(FeatureError::Dimension {
                expected: self.dim(),
                found: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&x, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((x - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub fn fit_normalization(train: &[FeatureVector]) -> Result<NormalizationModel, FeatureError> {
    NormalizationModel::fit(train.iter().map(|v| v.values.as_slice()))
}

pub fn apply_normalization(
    model: &NormalizationModel,
    v: &FeatureVector,
) -> Result<FeatureVector, FeatureError> {
    Ok(FeatureVector {
        image_id: v.image_id.clone(),
        values: model.transform(&v.values)?,
        label: v.label.clone(),
    })
}
