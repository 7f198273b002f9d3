use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, IngestError, Result, Split};

/// Stratified random train/test assignment.
///
/// Each category gets `round(train_fraction * size)` training images,
/// clamped so both sides keep at least one. Only `split` fields change.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<Corpus> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(IngestError::Split(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();

    for category in &corpus.categories {
        let mut members: Vec<usize> = corpus
            .images
            .iter()
            .enumerate()
            .filter(|(_, im)| &im.category == category)
            .map(|(i, _)| i)
            .collect();
        let n = members.len();
        if n < 2 {
            return Err(IngestError::Split(format!(
                "category {category:?} has {n} image(s); at least 2 are needed"
            )));
        }
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        for (pos, &idx) in members.iter().enumerate() {
            out.images[idx].split = if pos < n_train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}
