//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use semfeat::dictionary::CategoryDictionary;
use semfeat::ingest::{ImageRecord, Split, SubImageTags, TagRecord};

pub type PairCounts = BTreeMap<(String, String), u64>;

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Slide a width-2 window over the stream and count distinct unordered
/// pairs.
pub fn sliding_window_counts(tokens: &[String]) -> PairCounts {
    let mut out = PairCounts::new();
    for w in tokens.windows(2) {
        if w[0] != w[1] {
            *out.entry(key(&w[0], &w[1])).or_insert(0) += 1;
        }
    }
    out
}

pub fn random_stream<R: Rng>(rng: &mut R, max_len: usize, max_alphabet: usize) -> Vec<String> {
    let alphabet = rng.gen_range(1..=max_alphabet);
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| format!("t{:02}", rng.gen_range(0..alphabet)))
        .collect()
}

/// Random weighted graph as a list of unordered edges.
pub fn random_graph<R: Rng>(rng: &mut R, max_vertices: usize) -> PairCounts {
    let n = rng.gen_range(1..=max_vertices);
    let density: f64 = rng.gen_range(0.02..0.4);
    let mut edges = PairCounts::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                edges.insert(key(&vertex(a), &vertex(b)), rng.gen_range(1..20));
            }
        }
    }
    edges
}

pub fn vertex(i: usize) -> String {
    format!("v{i:02}")
}

pub fn vertices(edges: &PairCounts) -> BTreeSet<String> {
    edges
        .keys()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect()
}

/// Direct neighbours by a scan over every edge.
pub fn neighbors_by_scan(edges: &PairCounts, anchor: &str) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for ((a, b), &f) in edges {
        if a == anchor {
            out.insert(b.clone(), f);
        } else if b == anchor {
            out.insert(a.clone(), f);
        }
    }
    out
}

/// Vertices whose BFS depth from `anchor` is exactly 2, scored by the best
/// bottleneck over all anchor-mid-target paths.
pub fn bfs_depth_two(edges: &PairCounts, anchor: &str) -> BTreeMap<String, u64> {
    let mut depth: BTreeMap<String, usize> = BTreeMap::new();
    depth.insert(anchor.to_string(), 0);
    let mut frontier = vec![anchor.to_string()];
    for d in 1..=2 {
        let mut next = Vec::new();
        for u in &frontier {
            for v in neighbors_by_scan(edges, u).into_keys() {
                if !depth.contains_key(&v) {
                    depth.insert(v.clone(), d);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    let mut out = BTreeMap::new();
    for (target, _) in depth.iter().filter(|(_, &d)| d == 2) {
        let mut best = 0;
        for (mid, f1) in neighbors_by_scan(edges, anchor) {
            if let Some(&f2) = edges.get(&key(&mid, target)) {
                best = best.max(f1.min(f2));
            }
        }
        out.insert(target.clone(), best);
    }
    out
}

/// Reference semantic-object extraction: every label reached from a
/// candidate by a direct edge or a depth-2 path, minus the image's own
/// labels, best score kept, ranked by score, support, label.
pub fn semantic_objects_oracle(
    edges: &PairCounts,
    candidates: &[String],
    raw_labels: &BTreeSet<String>,
    direct: bool,
    two_hop: bool,
    s_sem: usize,
) -> Vec<(String, u64, usize)> {
    let mut best: BTreeMap<String, (u64, BTreeSet<usize>)> = BTreeMap::new();
    for (ci, c) in candidates.iter().enumerate() {
        let mut reached: Vec<(String, u64)> = Vec::new();
        if direct {
            reached.extend(neighbors_by_scan(edges, c));
        }
        if two_hop {
            reached.extend(bfs_depth_two(edges, c));
        }
        for (label, score) in reached {
            if raw_labels.contains(&label) {
                continue;
            }
            let e = best.entry(label).or_insert((0, BTreeSet::new()));
            e.0 = e.0.max(score);
            e.1.insert(ci);
        }
    }
    let mut out: Vec<(String, u64, usize)> = best
        .into_iter()
        .map(|(l, (s, sup))| (l, s, sup.len()))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    out.truncate(s_sem);
    out
}

/// Reference candidates: labels by occurrence count, then label.
pub fn candidates_oracle(image: &ImageRecord, k: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for sub in &image.sub_images {
        for t in &sub.tags {
            *counts.entry(t.label.clone()).or_insert(0) += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(l, _)| l).collect()
}

/// Reference Normal-delta summed feature vector with default propositions
/// {direct, two-hop}: sum of `p^2` over each category's semantic objects.
pub fn normal_features_oracle(
    image: &ImageRecord,
    dicts: &[CategoryDictionary],
    k_cand: usize,
    s_sem: usize,
) -> Vec<f64> {
    let cands = candidates_oracle(image, k_cand);
    let raw: BTreeSet<String> = image
        .sub_images
        .iter()
        .flat_map(|s| s.tags.iter().map(|t| t.label.clone()))
        .collect();
    dicts
        .iter()
        .map(|d| {
            let edges: PairCounts = d
                .pattern
                .pairs()
                .iter()
                .map(|(p, &f)| ((p.first.clone(), p.second.clone()), f))
                .collect();
            let total: u64 = d.counts.iter().map(|(_, c)| c).sum();
            semantic_objects_oracle(&edges, &cands, &raw, true, true, s_sem)
                .iter()
                .map(|(label, _, _)| {
                    let p = d.counts.count(label) as f64 / total as f64;
                    p * p
                })
                .fold(0.0, |a, b| a + b)
        })
        .collect()
}

/// Random image over a small vocabulary; labels within a sub-image are
/// distinct.
pub fn random_image<R: Rng>(
    rng: &mut R,
    id: &str,
    category: &str,
    slices: usize,
    k: usize,
    vocab: usize,
) -> ImageRecord {
    let sub_images = (0..slices)
        .map(|index| {
            let picks = rand::seq::index::sample(rng, vocab, k.min(vocab));
            let mut tags: Vec<TagRecord> = picks
                .iter()
                .map(|i| TagRecord {
                    label: format!("w{i:02}"),
                    score: 1.0 - rng.gen::<f64>(),
                })
                .collect();
            tags.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.label.cmp(&b.label)));
            SubImageTags { index, tags }
        })
        .collect();
    ImageRecord {
        image_id: id.to_string(),
        category: category.to_string(),
        split: Split::Unassigned,
        sub_images,
    }
}

/// Dual objective `Σα − ½ Σ α_i α_j y_i y_j ⟨x_i, x_j⟩`.
pub fn dual_objective(x: &[Vec<f64>], y: &[i8], alpha: &[f64]) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            quad += alpha[i] * alpha[j] * y[i] as f64 * y[j] as f64 * k;
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Exact optimum of the linear-kernel SVM dual by enumerating which
/// multipliers sit at 0, at `c`, or strictly between, and solving the
/// equality-constrained stationarity system on the free set.
pub fn qp_optimum(x: &[Vec<f64>], y: &[i8], c: f64) -> f64 {
    let n = x.len();
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let q = DMatrix::from_fn(n, n, |i, j| {
        yf[i] * yf[j] * x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let mut best = f64::NEG_INFINITY;
    let mut state = vec![0u8; n];
    loop {
        if let Some(alpha) = solve_face(&q, &yf, c, &state) {
            best = best.max(dual_objective(x, y, &alpha));
        }
        // next assignment in base 3: 0 = lower bound, 1 = upper, 2 = free
        let mut i = 0;
        while i < n && state[i] == 2 {
            state[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        state[i] += 1;
    }
    best
}

fn solve_face(q: &DMatrix<f64>, y: &[f64], c: f64, state: &[u8]) -> Option<Vec<f64>> {
    let n = y.len();
    let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
    let mut alpha: Vec<f64> = state
        .iter()
        .map(|&s| if s == 1 { c } else { 0.0 })
        .collect();
    let eq_fixed: f64 = (0..n).filter(|&i| state[i] == 1).map(|i| y[i] * c).sum();
    if free.is_empty() {
        return (eq_fixed.abs() < 1e-12).then_some(alpha);
    }
    let f = free.len();
    // [Q_FF y_F; y_F' 0] [a_F; b] = [1 - Q_FU a_U; -y_U' a_U]
    let mut k = DMatrix::zeros(f + 1, f + 1);
    let mut rhs = DVector::zeros(f + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            k[(r, s)] = q[(i, j)];
        }
        k[(r, f)] = y[i];
        k[(f, r)] = y[i];
        let fixed: f64 = (0..n)
            .filter(|&j| state[j] == 1)
            .map(|j| q[(i, j)] * c)
            .sum();
        rhs[r] = 1.0 - fixed;
    }
    rhs[f] = -eq_fixed;
    let svd = k.clone().svd(true, true);
    let smallest = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smallest <= 1e-10 * largest.max(1.0) {
        return None;
    }
    let sol = svd.solve(&rhs, 1e-14).ok()?;
    for (r, &i) in free.iter().enumerate() {
        let a = sol[r];
        if a < -1e-9 || a > c + 1e-9 {
            return None;
        }
        alpha[i] = a.clamp(0.0, c);
    }
    Some(alpha)
}

/// Up to six 2-D points split by a random line with a clear margin.
pub fn separable_problem<R: Rng>(rng: &mut R) -> (Vec<Vec<f64>>, Vec<i8>) {
    loop {
        let n = rng.gen_range(2..=6);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (nx, ny) = (theta.cos(), theta.sin());
        let offset: f64 = rng.gen_range(-0.5..0.5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        while x.len() < n {
            let p = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let s = p[0] * nx + p[1] * ny - offset;
            if s.abs() < 0.2 {
                continue;
            }
            y.push(if s > 0.0 { 1 } else { -1 });
            x.push(p);
        }
        if y.contains(&1) && y.contains(&-1) {
            return (x, y);
        }
    }
}
