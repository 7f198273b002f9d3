//! High-level semantic features for scene images.
//!
//! Per-sub-image object tags are turned into category dictionaries, the
//! dictionaries into per-image semantic objects, and those into one
//! feature value per category. A linear SVM trained by SMO evaluates the
//! features.
//!
//! The stages, in order:
//!
//! 1. [`ingest`]: parse or synthesize a tag corpus and split it.
//! 2. [`dictionary`]: raw and pattern dictionaries per category.
//! 3. [`semantic`]: candidate objects and proposition-based retrieval.
//! 4. [`features`]: delta weighting, fusion and normalization.
//! 5. [`classify`]: SMO, one-vs-one voting, cross-validation.
//! 6. [`pipeline`]: end-to-end runs and ablation tables.

pub mod classify;
pub mod dictionary;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod semantic;
