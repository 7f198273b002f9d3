use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::smo::{train_binary, BinarySvmModel, SmoParams};
use super::ClassifyError;

/// Binary machine separating `positive` (+1) from `negative` (−1),
/// with `positive < negative` as category indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    pub positive: usize,
    pub negative: usize,
    pub model: BinarySvmModel,
}

/// One-vs-one ensemble with majority voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub categories: Vec<String>,
    pub dim: usize,
    pub machines: Vec<PairMachine>,
}

/// Train one machine per unordered category pair on that pair's vectors.
///
/// `labels[i]` indexes into `categories`.
pub fn train_multiclass(
    vectors: &[Vec<f64>],
    labels: &[usize],
    categories: &[String],
    params: &SmoParams,
) -> Result<MulticlassModel, ClassifyError> {
    let m = categories.len();
    if m < 2 {
        return Err(ClassifyError::InvalidParams(
            "at least 2 categories are required".into(),
        ));
    }
    if vectors.len() != labels.len() {
        return Err(ClassifyError::InvalidParams(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
        return Err(ClassifyError::InvalidParams(format!(
            "label index {bad} out of range for {m} categories"
        )));
    }
    for (k, cat) in categories.iter().enumerate() {
        if !labels.contains(&k) {
            return Err(ClassifyError::EmptyCategory(cat.clone()));
        }
    }
    let dim = vectors.first().map_or(0, Vec::len);

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .into_par_iter()
        .map(|(a, b)| {
            let (xs, ys): (Vec<Vec<f64>>, Vec<i8>) = vectors
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == a || l == b)
                .map(|(x, &l)| (x.clone(), if l == a { 1 } else { -1 }))
                .unzip();
            Ok(PairMachine {
                positive: a,
                negative: b,
                model: train_binary(&xs, &ys, params)?,
            })
        })
        .collect::<Result<Vec<_>, ClassifyError>>()?;

    Ok(MulticlassModel {
        categories: categories.to_vec(),
        dim,
        machines,
    })
}

impl MulticlassModel {
    pub fn votes(&self, x: &[f64]) -> Result<Vec<usize>, ClassifyError> {
        if x.len() != self.dim {
            return Err(ClassifyError::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut votes = vec![0usize; self.categories.len()];
        for machine in &self.machines {
            let winner = if machine.model.decision(x) >= 0.0 {
                machine.positive
            } else {
                machine.negative
            };
            votes[winner] += 1;
        }
        Ok(votes)
    }

    /// Category index with the most votes; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ClassifyError> {
        Ok(argmax_lowest(&self.votes(x)?))
    }
}

pub(crate) fn argmax_lowest(votes: &[usize]) -> usize {
    let mut best = 0;
    for (k, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = k;
        }
    }
    best
}

pub fn predict(model: &MulticlassModel, x: &[f64]) -> Result<usize, ClassifyError> {
    model.predict(x)
}
