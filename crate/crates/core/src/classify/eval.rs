use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::multiclass::train_multiclass;
use super::smo::SmoParams;
use super::ClassifyError;
use crate::features::NormalizationModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub correct: usize,
    pub total: usize,
    /// `None` when the category had no test vectors.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub categories: Vec<String>,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_category: Vec<CategoryScore>,
    /// Rows are true categories, columns predicted ones.
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub folds: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn from_confusion(categories: &[String], confusion: Vec<Vec<usize>>) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..confusion.len()).map(|k| confusion[k][k]).sum();
        let per_category = categories
            .iter()
            .zip(&confusion)
            .enumerate()
            .map(|(k, (cat, row))| {
                let n: usize = row.iter().sum();
                CategoryScore {
                    category: cat.clone(),
                    correct: row[k],
                    total: n,
                    accuracy: (n > 0).then(|| row[k] as f64 / n as f64),
                }
            })
            .collect();
        EvalReport {
            categories: categories.to_vec(),
            accuracy: if total > 0 {
                correct as f64 / total as f64
            } else {
                0.0
            },
            correct,
            total,
            per_category,
            confusion,
            folds: None,
        }
    }

    /// Build a report from `(true, predicted)` category indices.
    pub fn from_predictions(categories: &[String], truth: &[usize], predicted: &[usize]) -> Self {
        let m = categories.len();
        let mut confusion = vec![vec![0usize; m]; m];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        Self::from_confusion(categories, confusion)
    }
}

/// Stratified fold index per vector: each category is shuffled and dealt
/// round-robin over the folds.
pub fn stratified_folds(
    labels: &[usize],
    n_categories: usize,
    folds: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for cat in 0..n_categories {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cat).collect();
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            assignment[idx] = pos % folds;
        }
    }
    assignment
}

/// Stratified k-fold cross-validation. Each fold fits min-max
/// normalization on its training part, trains a one-vs-one model and
/// tests on the held-out part; the confusion matrix aggregates all folds.
pub fn cross_validate(
    vectors: &[Vec<f64>],
    labels: &[usize],
    categories: &[String],
    folds: usize,
    seed: u64,
    params: &SmoParams,
) -> Result<EvalReport, ClassifyError> {
    if folds < 2 {
        return Err(ClassifyError::InvalidParams(format!(
            "folds = {folds} must be at least 2"
        )));
    }
    let m = categories.len();
    for (k, cat) in categories.iter().enumerate() {
        let count = labels.iter().filter(|&&l| l == k).count();
        if count < 2 {
            return Err(ClassifyError::TooFewVectors {
                category: cat.clone(),
                count,
            });
        }
    }
    let assignment = stratified_folds(labels, m, folds, seed);

    let per_fold: Vec<Option<(Vec<Vec<usize>>, f64)>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..vectors.len()).partition(|&i| assignment[i] != fold);
            if test.is_empty() {
                return Ok(None);
            }
            let norm = NormalizationModel::fit(train.iter().map(|&i| vectors[i].as_slice()))
                .map_err(|e| ClassifyError::InvalidParams(e.to_string()))?;
            let scale = |i: usize| {
                norm.transform(&vectors[i])
                    .map_err(|e| ClassifyError::InvalidParams(e.to_string()))
            };
            let xs = train
                .iter()
                .map(|&i| scale(i))
                .collect::<Result<Vec<_>, _>>()?;
            let ys: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let model = train_multiclass(&xs, &ys, categories, params)?;

            let mut confusion = vec![vec![0usize; m]; m];
            let mut correct = 0;
            for &i in &test {
                let p = model.predict(&scale(i)?)?;
                confusion[labels[i]][p] += 1;
                correct += usize::from(p == labels[i]);
            }
            Ok(Some((confusion, correct as f64 / test.len() as f64)))
        })
        .collect::<Result<_, ClassifyError>>()?;

    let mut confusion = vec![vec![0usize; m]; m];
    let mut fold_acc = Vec::new();
    for (c, acc) in per_fold.into_iter().flatten() {
        for (row, add) in confusion.iter_mut().zip(c) {
            for (x, y) in row.iter_mut().zip(add) {
                *x += y;
            }
        }
        fold_acc.push(acc);
    }
    let mut report = EvalReport::from_confusion(categories, confusion);
    report.folds = Some(fold_acc);
    Ok(report)
}
