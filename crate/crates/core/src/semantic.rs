//! Candidate-object selection and semantic-object retrieval over a
//! category's pair graph.
//!
//! The pair graph has one vertex per label and one edge per pattern
//! dictionary pair, weighted by its frequency. Four relations are
//! available:
//!
//! * `P1`: direct co-occurrence, scored by edge frequency.
//! * `P2`: labels sharing the anchor as a common neighbour; seen from the
//!   anchor this is its neighbour set, scored like `P1`.
//! * `P3`, `P4`: labels exactly two hops away, scored by the weaker of the
//!   two edges. `P3` is traced when the best path leaves the anchor through
//!   an edge other than its strongest one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::PatternDictionary;
use crate::ingest::ImageRecord;

pub const DEFAULT_K_CAND: usize = 5;
pub const DEFAULT_S_SEM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proposition {
    P1,
    P2,
    P3,
    P4,
}

impl Proposition {
    pub const ALL: [Proposition; 4] = [
        Proposition::P1,
        Proposition::P2,
        Proposition::P3,
        Proposition::P4,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", *self as u8 + 1)
    }
}

impl FromStr for Proposition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p1" => Ok(Proposition::P1),
            "p2" => Ok(Proposition::P2),
            "p3" => Ok(Proposition::P3),
            "p4" => Ok(Proposition::P4),
            other => Err(format!("unknown proposition {other:?} (expected p1..p4)")),
        }
    }
}

/// Non-empty set of enabled propositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PropositionSet(u8);

impl PropositionSet {
    pub fn new(props: &[Proposition]) -> Result<Self, String> {
        let bits = props.iter().fold(0, |acc, p| acc | p.bit());
        if bits == 0 {
            return Err("at least one proposition must be enabled".into());
        }
        Ok(PropositionSet(bits))
    }

    pub fn all() -> Self {
        PropositionSet(0b1111)
    }

    pub fn contains(self, p: Proposition) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Proposition> {
        Proposition::ALL
            .into_iter()
            .filter(move |p| self.contains(*p))
    }

    pub fn union(self, other: Self) -> Self {
        PropositionSet(self.0 | other.0)
    }
}

impl Default for PropositionSet {
    fn default() -> Self {
        PropositionSet(Proposition::P1.bit() | Proposition::P4.bit())
    }
}

impl fmt::Display for PropositionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for PropositionSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let props = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Proposition>, _>>()?;
        PropositionSet::new(&props)
    }
}

impl Serialize for PropositionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PropositionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateSet {
    pub image_id: String,
    pub candidates: Vec<String>,
    pub raw_support: BTreeMap<String, u64>,
}

/// The image's `k_cand` most frequent labels across its sub-images; ties
/// go to the lexicographically smaller label.
pub fn select_candidates(image: &ImageRecord, k_cand: usize) -> CandidateSet {
    let mut raw_support: BTreeMap<String, u64> = BTreeMap::new();
    for label in image.labels() {
        *raw_support.entry(label.to_string()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&String, u64)> = raw_support.iter().map(|(l, c)| (l, *c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let candidates = ranked
        .into_iter()
        .take(k_cand)
        .map(|(l, _)| l.clone())
        .collect();
    CandidateSet {
        image_id: image.image_id.clone(),
        candidates,
        raw_support,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Related {
    pub label: String,
    pub score: u64,
    pub proposition: Proposition,
}

/// Vertices at distance exactly 2 from `anchor`, in label order, with the
/// best bottleneck score over their two-hop paths and the intermediate of
/// that path (the smallest-label one on ties).
fn two_hop(pattern: &PatternDictionary, anchor: usize) -> Vec<(usize, u64, usize)> {
    let n = pattern.vertex_count();
    let mut excluded = vec![false; n];
    excluded[anchor] = true;
    for &(v, _) in pattern.edges(anchor) {
        excluded[v] = true;
    }
    let mut best: Vec<Option<(u64, usize)>> = vec![None; n];
    for &(mid, f1) in pattern.edges(anchor) {
        for &(target, f2) in pattern.edges(mid) {
            if excluded[target] {
                continue;
            }
            let score = f1.min(f2);
            match &mut best[target] {
                Some((s, _)) if *s >= score => {}
                slot => *slot = Some((score, mid)),
            }
        }
    }
    best.into_iter()
        .enumerate()
        .filter_map(|(t, b)| b.map(|(s, via)| (t, s, via)))
        .collect()
}

/// Neighbour with the highest frequency; ties go to the smaller label.
fn strongest_neighbor(pattern: &PatternDictionary, anchor: usize) -> Option<usize> {
    pattern
        .edges(anchor)
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|&(v, _)| v)
}

/// Labels related to `anchor` under one proposition, by score descending
/// then label ascending. An anchor outside the graph relates to nothing.
pub fn related_by_proposition(
    pattern: &PatternDictionary,
    anchor: &str,
    mode: Proposition,
) -> Vec<Related> {
    let Some(a) = pattern.label_id(anchor) else {
        return Vec::new();
    };
    let related = |v: usize, score: u64, proposition: Proposition| Related {
        label: pattern.label(v).to_string(),
        score,
        proposition,
    };
    let mut out: Vec<Related> = match mode {
        Proposition::P1 | Proposition::P2 => pattern
            .edges(a)
            .iter()
            .map(|&(v, f)| related(v, f, mode))
            .collect(),
        Proposition::P4 => two_hop(pattern, a)
            .into_iter()
            .map(|(t, score, _)| related(t, score, Proposition::P4))
            .collect(),
        Proposition::P3 => {
            let top = strongest_neighbor(pattern, a);
            two_hop(pattern, a)
                .into_iter()
                .map(|(t, score, via)| {
                    let p = if Some(via) == top {
                        Proposition::P4
                    } else {
                        Proposition::P3
                    };
                    related(t, score, p)
                })
                .collect()
        }
    };
    out.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.label.cmp(&b.label)));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemanticObject {
    pub label: String,
    /// Best relation score over all candidates and enabled propositions.
    pub score: u64,
    /// Number of distinct candidates relating to this label.
    pub support: usize,
    /// Proposition that produced the best score.
    pub proposition: Proposition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemanticObjectSet {
    pub image_id: String,
    pub category: String,
    pub objects: Vec<SemanticObject>,
}

/// Every label related to any candidate under any enabled proposition,
/// minus `raw_labels`, sorted by score descending, candidate support
/// descending, then label ascending.
pub fn related_objects(
    pattern: &PatternDictionary,
    candidates: &[String],
    raw_labels: &BTreeSet<&str>,
    modes: PropositionSet,
) -> Vec<SemanticObject> {
    struct Acc {
        score: u64,
        proposition: Proposition,
        supporters: BTreeSet<usize>,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for (ci, cand) in candidates.iter().enumerate() {
        for mode in modes.iter() {
            for r in related_by_proposition(pattern, cand, mode) {
                if raw_labels.contains(r.label.as_str()) {
                    continue;
                }
                let entry = acc.entry(r.label).or_insert(Acc {
                    score: r.score,
                    proposition: r.proposition,
                    supporters: BTreeSet::new(),
                });
                entry.supporters.insert(ci);
                if r.score > entry.score
                    || (r.score == entry.score && r.proposition < entry.proposition)
                {
                    entry.score = r.score;
                    entry.proposition = r.proposition;
                }
            }
        }
    }
    let mut objects: Vec<SemanticObject> = acc
        .into_iter()
        .map(|(label, a)| SemanticObject {
            label,
            score: a.score,
            support: a.supporters.len(),
            proposition: a.proposition,
        })
        .collect();
    objects.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| b.support.cmp(&a.support))
            .then_with(|| a.label.cmp(&b.label))
    });
    objects
}

/// Map an image's candidates through one category's pattern dictionary,
/// keeping the best `s_sem` objects not already among the image's labels.
pub fn extract_semantic_objects(
    pattern: &PatternDictionary,
    cands: &CandidateSet,
    raw_labels: &BTreeSet<&str>,
    s_sem: usize,
    modes: PropositionSet,
) -> SemanticObjectSet {
    let mut objects = related_objects(pattern, &cands.candidates, raw_labels, modes);
    objects.truncate(s_sem);
    SemanticObjectSet {
        image_id: cands.image_id.clone(),
        category: pattern.category.clone(),
        objects,
    }
}
