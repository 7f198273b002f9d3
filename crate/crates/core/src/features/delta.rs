//! The six delta weightings applied to an object's category probability.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::LabelCounts;

pub const DEFAULT_DIVIDE_EXPONENT: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeltaKind {
    /// `f / c`: the object's relative frequency in the raw dictionary.
    #[default]
    Normal,
    /// `p / Σ p` over every (semantic object, category) pair of the image.
    Avg,
    /// `p / p^(1/4)`.
    Normalized,
    /// `p · f`.
    Multi,
    /// `√p`.
    Root,
    /// `p / 10^exponent`.
    Divide { exponent: u32 },
}

impl DeltaKind {
    /// All kinds, in the column order used by ablation tables.
    pub fn all(divide_exponent: u32) -> [DeltaKind; 6] {
        [
            DeltaKind::Avg,
            DeltaKind::Divide {
                exponent: divide_exponent,
            },
            DeltaKind::Multi,
            DeltaKind::Normal,
            DeltaKind::Normalized,
            DeltaKind::Root,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            DeltaKind::Normal => "normal",
            DeltaKind::Avg => "avg",
            DeltaKind::Normalized => "normalized",
            DeltaKind::Multi => "multi",
            DeltaKind::Root => "root",
            DeltaKind::Divide { .. } => "divide",
        }
    }

    /// Parse a kind name; `divide_exponent` only matters for `divide`.
    pub fn parse(name: &str, divide_exponent: u32) -> Result<Self, String> {
        Ok(match name.trim().to_ascii_lowercase().as_str() {
            "normal" => DeltaKind::Normal,
            "avg" => DeltaKind::Avg,
            "normalized" => DeltaKind::Normalized,
            "multi" => DeltaKind::Multi,
            "root" => DeltaKind::Root,
            "divide" => DeltaKind::Divide {
                exponent: divide_exponent,
            },
            other => {
                return Err(format!(
                    "unknown delta kind {other:?} (expected normal, avg, normalized, multi, root or divide)"
                ))
            }
        })
    }
}

impl fmt::Display for DeltaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeltaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeltaKind::parse(s, DEFAULT_DIVIDE_EXPONENT)
    }
}

/// Per-image probability table: `(frequency, total)` of every
/// (semantic object, category) pair, used by the `Avg` denominator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbabilityContext {
    sum: f64,
    smoothed_sum: f64,
}

impl ProbabilityContext {
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(entries: I) -> Self {
        let mut ctx = ProbabilityContext::default();
        for (f, c) in entries {
            ctx.sum += ratio(f, c);
            ctx.smoothed_sum += smoothed(f, c);
        }
        ctx
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }
}

fn ratio(f: u64, c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        f as f64 / c as f64
    }
}

/// Add-one smoothed relative frequency.
fn smoothed(f: u64, c: u64) -> f64 {
    (f + 1) as f64 / (c + 1) as f64
}

/// Delta weight of `label` under `counts`.
///
/// Whenever a kind's denominator would be zero, the frequency counts
/// involved are add-one smoothed; otherwise probabilities are exact.
pub fn delta(kind: DeltaKind, counts: &LabelCounts, label: &str, ctx: &ProbabilityContext) -> f64 {
    let f = counts.count(label);
    let c = counts.total();
    match kind {
        DeltaKind::Normal => {
            if c == 0 {
                smoothed(f, c)
            } else {
                f as f64 / c as f64
            }
        }
        DeltaKind::Avg => {
            if ctx.sum > 0.0 {
                ratio(f, c) / ctx.sum
            } else if ctx.smoothed_sum > 0.0 {
                smoothed(f, c) / ctx.smoothed_sum
            } else {
                0.0
            }
        }
        DeltaKind::Normalized => {
            let p = ratio(f, c);
            if p > 0.0 {
                p / p.powf(0.25)
            } else {
                let p = smoothed(f, c);
                p / p.powf(0.25)
            }
        }
        DeltaKind::Multi => ratio(f, c) * f as f64,
        DeltaKind::Root => ratio(f, c).sqrt(),
        DeltaKind::Divide { exponent } => ratio(f, c) / 10f64.powi(exponent as i32),
    }
}
