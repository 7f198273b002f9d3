mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semfeat::classify::{
    stratified_folds, train_binary, train_binary_traced, EvalReport, SmoParams,
};
use semfeat::dictionary::{
    build_all, build_pattern_dictionary, LabelPair, PatternDictionary, PatternOptions,
    RawDictionary,
};
use semfeat::features::{
    featurize, DictionarySet, FeatureParams, FeatureVector, NormalizationModel,
};
use semfeat::ingest::{
    generate_synthetic, parse_corpus_str, split_corpus, Corpus, ParseOptions, SyntheticSpec,
};
use semfeat::semantic::{
    extract_semantic_objects, related_by_proposition, select_candidates, Proposition,
    PropositionSet,
};

fn tokens() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec((0u8..12).prop_map(|t| format!("t{t:02}")), 0..200)
}

fn graph() -> impl Strategy<Value = common::PairCounts> {
    prop::collection::btree_map((0usize..16, 0usize..16), 1u64..12, 0..60).prop_map(|m| {
        m.into_iter()
            .filter(|((a, b), _)| a != b)
            .map(|((a, b), f)| {
                let (a, b) = (common::vertex(a.min(b)), common::vertex(a.max(b)));
                ((a, b), f)
            })
            .collect()
    })
}

fn pattern_of(edges: &common::PairCounts) -> PatternDictionary {
    PatternDictionary::from_pairs(
        "g",
        edges.iter().map(|((a, b), &f)| (LabelPair::new(a, b), f)),
    )
}

fn small_corpus(seed: u64, m: usize, ipc: usize, q: f64) -> Corpus {
    let spec = SyntheticSpec::disjoint_with(m, ipc, 9, q, 8, 12);
    generate_synthetic(&spec, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips(seed in any::<u64>(), m in 2usize..4, ipc in 2usize..5, q in 0.1f64..1.0) {
        let corpus = small_corpus(seed, m, ipc, q);
        let split = split_corpus(&corpus, 0.5, seed).unwrap();
        for c in [corpus, split] {
            let back = parse_corpus_str(&c.to_jsonl(), ParseOptions::default()).unwrap();
            prop_assert_eq!(back, c);
        }
    }

    #[test]
    fn bigram_counts_match_window(tokens in tokens()) {
        let raw = RawDictionary::from_tokens("c", &tokens);
        let pattern = build_pattern_dictionary(&raw, PatternOptions::default());
        let got: common::PairCounts = pattern
            .pairs()
            .iter()
            .map(|(p, &f)| ((p.first.clone(), p.second.clone()), f))
            .collect();
        prop_assert_eq!(got, common::sliding_window_counts(&tokens));
    }

    #[test]
    fn bigram_counts_ignore_direction(tokens in tokens()) {
        let mut rev = tokens.clone();
        rev.reverse();
        let opts = PatternOptions::default();
        let a = build_pattern_dictionary(&RawDictionary::from_tokens("c", &tokens), opts);
        let b = build_pattern_dictionary(&RawDictionary::from_tokens("c", &rev), opts);
        prop_assert_eq!(a.pairs(), b.pairs());
        let both = PatternOptions { count_both_directions: true, ..opts };
        let d = build_pattern_dictionary(&RawDictionary::from_tokens("c", &tokens), both);
        for (pair, f) in a.pairs() {
            prop_assert_eq!(d.frequency(&pair.first, &pair.second), 2 * f);
        }
        prop_assert_eq!(d.len(), a.len());
    }

    #[test]
    fn ranking_is_sorted_by_frequency(tokens in tokens()) {
        let p = build_pattern_dictionary(&RawDictionary::from_tokens("c", &tokens), PatternOptions::default());
        prop_assert!(p.ranked().windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        prop_assert_eq!(p.ranked().len(), p.pairs().len());
    }

    #[test]
    fn probabilities_sum_to_one(tokens in tokens()) {
        prop_assume!(!tokens.is_empty());
        let raw = RawDictionary::from_tokens("c", &tokens);
        let labels: BTreeSet<&String> = tokens.iter().collect();
        let total: f64 = labels.iter().map(|l| raw.probability(l)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert_eq!(raw.probability("missing"), 0.0);
    }

    #[test]
    fn direct_relation_is_symmetric(edges in graph()) {
        let p = pattern_of(&edges);
        for a in common::vertices(&edges) {
            for r in related_by_proposition(&p, &a, Proposition::P1) {
                let back = related_by_proposition(&p, &r.label, Proposition::P1);
                prop_assert!(back.iter().any(|s| s.label == a && s.score == r.score));
            }
        }
    }

    #[test]
    fn two_hop_matches_bfs(edges in graph()) {
        let p = pattern_of(&edges);
        for a in common::vertices(&edges) {
            let got: BTreeMap<String, u64> = related_by_proposition(&p, &a, Proposition::P4)
                .into_iter()
                .map(|r| (r.label, r.score))
                .collect();
            prop_assert_eq!(got, common::bfs_depth_two(&edges, &a));
            // P3 reaches the same vertices
            let p3: BTreeSet<String> = related_by_proposition(&p, &a, Proposition::P3)
                .into_iter()
                .map(|r| r.label)
                .collect();
            prop_assert_eq!(p3, common::bfs_depth_two(&edges, &a).into_keys().collect());
        }
    }

    #[test]
    fn extraction_matches_closure(
        edges in graph(),
        cands in prop::collection::btree_set(0usize..18, 1..5),
        extra in prop::collection::btree_set(0usize..18, 0..4),
        s_sem in 1usize..8,
    ) {
        let p = pattern_of(&edges);
        let candidates: Vec<String> = cands.iter().map(|&i| common::vertex(i)).collect();
        let raw: BTreeSet<String> = cands.union(&extra).map(|&i| common::vertex(i)).collect();
        let raw_ref: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
        let set = semfeat::semantic::CandidateSet {
            image_id: "i".into(),
            candidates: candidates.clone(),
            raw_support: BTreeMap::new(),
        };
        for (modes, direct, two) in [
            ("p1,p4", true, true),
            ("p1", true, false),
            ("p4", false, true),
            ("p2,p3", true, true),
        ] {
            let modes: PropositionSet = modes.parse().unwrap();
            let got: Vec<(String, u64, usize)> = extract_semantic_objects(&p, &set, &raw_ref, s_sem, modes)
                .objects
                .into_iter()
                .map(|o| (o.label, o.score, o.support))
                .collect();
            let want = common::semantic_objects_oracle(&edges, &candidates, &raw, direct, two, s_sem);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn extraction_truncates_a_common_ranking(edges in graph(), cands in prop::collection::btree_set(0usize..18, 1..4)) {
        let p = pattern_of(&edges);
        let set = semfeat::semantic::CandidateSet {
            image_id: "i".into(),
            candidates: cands.iter().map(|&i| common::vertex(i)).collect(),
            raw_support: BTreeMap::new(),
        };
        let raw: BTreeSet<&str> = set.candidates.iter().map(String::as_str).collect();
        let modes = PropositionSet::default();
        let long = extract_semantic_objects(&p, &set, &raw, 20, modes).objects;
        for s in 1..6 {
            let short = extract_semantic_objects(&p, &set, &raw, s, modes).objects;
            prop_assert_eq!(&short[..], &long[..short.len()]);
            prop_assert_eq!(short.len(), s.min(long.len()));
        }
        for o in &long {
            prop_assert!(!raw.contains(o.label.as_str()));
        }
    }

    #[test]
    fn extraction_ignores_frequency_scale(edges in graph(), k in 2u64..5, cand in 0usize..16) {
        let scaled: common::PairCounts = edges.iter().map(|(e, f)| (e.clone(), f * k)).collect();
        let set = semfeat::semantic::CandidateSet {
            image_id: "i".into(),
            candidates: vec![common::vertex(cand)],
            raw_support: BTreeMap::new(),
        };
        let raw: BTreeSet<&str> = set.candidates.iter().map(String::as_str).collect();
        let labels = |p: &PatternDictionary| -> Vec<String> {
            extract_semantic_objects(p, &set, &raw, 5, PropositionSet::all())
                .objects
                .into_iter()
                .map(|o| o.label)
                .collect()
        };
        prop_assert_eq!(labels(&pattern_of(&edges)), labels(&pattern_of(&scaled)));
    }

    #[test]
    fn featurize_matches_summation_oracle(seed in any::<u64>(), q in 0.3f64..1.0) {
        let corpus = split_corpus(&small_corpus(seed, 3, 6, q), 0.5, seed).unwrap();
        let dicts = build_all(&corpus, 100, PatternOptions::default()).unwrap();
        let set = DictionarySet::new(&corpus.categories, dicts.clone()).unwrap();
        let params = FeatureParams::default();
        for im in &corpus.images {
            let got = featurize(im, &set, &params);
            let want = common::normal_features_oracle(im, &dicts, params.k_cand, params.s_sem);
            prop_assert_eq!(got.values.len(), want.len());
            for (a, b) in got.values.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{} vs {}", a, b);
            }
            // repeat calls agree bit for bit
            prop_assert_eq!(&featurize(im, &set, &params), &got);
        }
    }

    #[test]
    fn candidates_match_oracle(seed in any::<u64>(), k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let im = common::random_image(&mut rng, "i", "c", 9, 5, 12);
        prop_assert_eq!(select_candidates(&im, k).candidates, common::candidates_oracle(&im, k));
    }

    #[test]
    fn normalization_matches_scan(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..20)) {
        let model = NormalizationModel::fit(rows.iter().map(Vec::as_slice)).unwrap();
        for j in 0..3 {
            let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            for r in &rows {
                let t = model.transform(r).unwrap()[j];
                prop_assert!((0.0..=1.0).contains(&t));
                if hi > lo {
                    prop_assert!((t - (r[j] - lo) / (hi - lo)).abs() < 1e-12);
                } else {
                    prop_assert_eq!(t, 0.0);
                }
            }
            // out-of-range values are clipped
            let mut probe = rows[0].clone();
            probe[j] = hi + 100.0;
            let t = model.transform(&probe).unwrap()[j];
            prop_assert!(t == 1.0 || (hi == lo && t == 0.0));
        }
    }

    #[test]
    fn split_counts_are_stratified(seed in any::<u64>(), ipc in 2usize..12, f in 0.05f64..0.95) {
        let corpus = small_corpus(seed, 3, ipc, 0.7);
        let a = split_corpus(&corpus, f, seed).unwrap();
        prop_assert_eq!(&a, &split_corpus(&corpus, f, seed).unwrap());
        let want = ((f * ipc as f64).round() as usize).clamp(1, ipc - 1);
        for cat in &a.categories {
            let train = a.images_in(cat).filter(|im| im.split == semfeat::ingest::Split::Train).count();
            prop_assert_eq!(train, want);
        }
    }

    #[test]
    fn folds_are_balanced(counts in prop::collection::vec(2usize..30, 2..5), k in 2usize..8, seed in any::<u64>()) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let folds = stratified_folds(&labels, counts.len(), k, seed);
        for (c, &n) in counts.iter().enumerate() {
            let per: Vec<usize> = (0..k)
                .map(|f| (0..labels.len()).filter(|&i| labels[i] == c && folds[i] == f).count())
                .collect();
            prop_assert_eq!(per.iter().sum::<usize>(), n);
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn report_is_consistent(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let cats: Vec<String> = (0..4).map(|c| c.to_string()).collect();
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let r = EvalReport::from_predictions(&cats, &truth, &pred);
        prop_assert_eq!(r.total, pairs.len());
        prop_assert_eq!(r.correct, pairs.iter().filter(|(t, p)| t == p).count());
        prop_assert_eq!(r.accuracy, r.correct as f64 / r.total as f64);
        prop_assert_eq!(r.confusion.iter().flatten().sum::<usize>(), r.total);
        for (k, s) in r.per_category.iter().enumerate() {
            prop_assert_eq!(s.total, r.confusion[k].iter().sum::<usize>());
            prop_assert_eq!(s.correct, r.confusion[k][k]);
        }
    }
}

fn svm_problem() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<i8>)> {
    prop::collection::vec(
        (prop::collection::vec(-2.0f64..2.0, 2), any::<bool>()),
        2..7,
    )
    .prop_filter("needs both classes", |pts| {
        pts.iter().any(|p| p.1) && pts.iter().any(|p| !p.1)
    })
    .prop_map(|pts| {
        let y = pts.iter().map(|p| if p.1 { 1 } else { -1 }).collect();
        (pts.into_iter().map(|p| p.0).collect(), y)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smo_reaches_qp_optimum((x, y) in svm_problem(), c in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let params = SmoParams { c, tol: 1e-7, ..SmoParams::default() };
        let (m, trace) = train_binary_traced(&x, &y, &params).unwrap();
        prop_assert!(m.converged);
        let opt = common::qp_optimum(&x, &y, c);
        let got = common::dual_objective(&x, &y, &m.alphas);
        prop_assert!((got - opt).abs() <= 1e-6 * opt.abs().max(1.0), "{} vs {}", got, opt);
        prop_assert!(m.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        prop_assert!(m.equality_residual().abs() < 1e-9);
        prop_assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn smo_ignores_training_order((x, y) in svm_problem(), rot in 0usize..6) {
        let params = SmoParams { tol: 1e-8, ..SmoParams::default() };
        let n = x.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<i8> = perm.iter().map(|&i| y[i]).collect();
        let a = train_binary(&x, &y, &params).unwrap();
        let b = train_binary(&xp, &yp, &params).unwrap();
        prop_assert!((a.dual_objective() - b.dual_objective()).abs() < 1e-6);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            prop_assert!((wa - wb).abs() < 1e-3);
        }
    }
}

#[test]
fn normalization_rejects_wrong_dimension() {
    let model = NormalizationModel::fit([[0.0, 1.0].as_slice()]).unwrap();
    assert!(model.transform(&[0.0]).is_err());
    let v: Vec<FeatureVector> = Vec::new();
    assert!(semfeat::features::fit_normalization(&v).is_err());
}
