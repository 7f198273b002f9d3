//! Deterministic synthetic tag corpora with planted co-occurrence.
//!
//! Every category owns a signature label set. Each sub-image fills each tag
//! slot from the signature with probability `q`, otherwise from a shared
//! noise pool. Each image picks a theme: a cyclic window of `theme_width`
//! consecutive signature labels. Its sub-images draw their signature tags
//! from that window in random order and give them the highest scores, so
//! signature pairs sit next to each other in the tag stream. Images of one
//! category share overlapping themes, so labels an image lacks still
//! co-occur with the labels it has.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Corpus, ImageRecord, IngestError, Result, Split, SubImageTags, TagRecord, VALID_SLICES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub signature: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub categories: Vec<CategorySpec>,
    pub noise_pool: Vec<String>,
    pub images_per_category: usize,
    pub n_slices: usize,
    pub k_tags: usize,
    /// Probability that a tag slot is drawn from the category signature.
    pub q: f64,
    /// Signature labels one image draws from; clamped to the signature size.
    #[serde(default = "default_theme_width")]
    pub theme_width: usize,
}

fn default_theme_width() -> usize {
    10
}

impl SyntheticSpec {
    /// `m` categories with disjoint 24-label signatures, 10-label themes
    /// and an 80-label shared noise pool.
    pub fn disjoint(m: usize, images_per_category: usize, n_slices: usize, q: f64) -> Self {
        Self::disjoint_with(m, images_per_category, n_slices, q, 24, 80)
    }

    pub fn disjoint_with(
        m: usize,
        images_per_category: usize,
        n_slices: usize,
        q: f64,
        signature_size: usize,
        noise_size: usize,
    ) -> Self {
        let categories = (0..m)
            .map(|c| CategorySpec {
                name: format!("category_{c:02}"),
                signature: (0..signature_size)
                    .map(|s| format!("c{c:02}_object_{s:02}"))
                    .collect(),
            })
            .collect();
        SyntheticSpec {
            categories,
            noise_pool: (0..noise_size).map(|n| format!("noise_{n:03}")).collect(),
            images_per_category,
            n_slices,
            k_tags: super::DEFAULT_K_TAGS,
            q,
            theme_width: default_theme_width(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IngestError::Synthetic(msg));
        if !(self.q > 0.0 && self.q <= 1.0) {
            return bad(format!("q = {} must lie in (0, 1]", self.q));
        }
        if self.categories.len() < 2 {
            return bad("at least 2 categories are required".into());
        }
        if self.images_per_category < 2 {
            return bad("at least 2 images per category are required".into());
        }
        if !VALID_SLICES.contains(&self.n_slices) {
            return bad(format!("{} sub-images is not 9, 16 or 25", self.n_slices));
        }
        if self.k_tags == 0 {
            return bad("k_tags must be at least 1".into());
        }
        if self.theme_width == 0 {
            return bad("theme_width must be at least 1".into());
        }
        if self.q < 1.0 && self.noise_pool.is_empty() {
            return bad("q < 1 needs a non-empty noise pool".into());
        }
        for (i, cat) in self.categories.iter().enumerate() {
            if cat.signature.len() < 2 {
                return bad(format!(
                    "category {:?} has a signature of {} label(s); at least 2 are required",
                    cat.name,
                    cat.signature.len()
                ));
            }
            if self.categories[..i].iter().any(|c| c.name == cat.name) {
                return bad(format!("duplicate category {:?}", cat.name));
            }
        }
        Ok(())
    }
}

/// Generate a corpus; a pure function of `(spec, seed)`. All images are
/// `unassigned`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(spec.categories.len() * spec.images_per_category);

    for cat in &spec.categories {
        for n in 0..spec.images_per_category {
            let theme = rng.gen_range(0..cat.signature.len());
            let sub_images = (0..spec.n_slices)
                .map(|index| SubImageTags {
                    index,
                    tags: sub_image_tags(spec, cat, theme, &mut rng),
                })
                .collect();
            images.push(ImageRecord {
                image_id: format!("{}_{n:04}", cat.name),
                category: cat.name.clone(),
                split: Split::Unassigned,
                sub_images,
            });
        }
    }

    Ok(Corpus {
        images,
        categories: spec.categories.iter().map(|c| c.name.clone()).collect(),
        n_slices: spec.n_slices,
        k_tags: spec.k_tags,
    })
}

fn sub_image_tags(
    spec: &SyntheticSpec,
    cat: &CategorySpec,
    theme: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<TagRecord> {
    let k = spec.k_tags;
    let sig_len = cat.signature.len();
    let n_sig = (0..k).filter(|_| rng.gen_bool(spec.q)).count();
    let width = spec.theme_width.min(sig_len);

    let mut offsets: Vec<usize> = if n_sig <= width {
        sample(rng, width, n_sig).into_vec()
    } else {
        (0..n_sig).map(|_| rng.gen_range(0..width)).collect()
    };
    offsets.shuffle(rng);
    let mut labels: Vec<&str> = offsets
        .into_iter()
        .map(|t| cat.signature[(theme + t) % sig_len].as_str())
        .collect();
    let n_noise = k - n_sig;
    if n_noise > 0 {
        if spec.noise_pool.len() >= n_noise {
            let picks = sample(rng, spec.noise_pool.len(), n_noise);
            labels.extend(picks.iter().map(|i| spec.noise_pool[i].as_str()));
        } else {
            for _ in 0..n_noise {
                let i = rng.gen_range(0..spec.noise_pool.len());
                labels.push(spec.noise_pool[i].as_str());
            }
        }
    }

    // (0, 1], descending
    let mut scores: Vec<f64> = (0..k).map(|_| 1.0 - rng.gen::<f64>()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));

    let mut sub = SubImageTags {
        index: 0,
        tags: labels
            .into_iter()
            .zip(scores)
            .map(|(label, score)| TagRecord {
                label: label.to_string(),
                score,
            })
            .collect(),
    };
    sub.rank();
    sub.tags
}
