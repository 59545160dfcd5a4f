use std::collections::{BTreeMap, BTreeSet};

use nopcode_core::dataset::{export_arff, stratified_folds, LabeledDataset};
use nopcode_core::ig::{
    contingency_of, info_gain, merge_rankings, rank, rank_shard, select, ContingencyTable, Discretizer,
    SelectionRule,
};
use nopcode_core::ingest::{read_opseq, write_opseq, AppRecord, OpcodeSeq};
use nopcode_core::learn::train;
use nopcode_core::ngram::{build_vocabulary, extract_ngrams, featurize, merge_vocab, FeatureMode, SparseVector};
use nopcode_core::opcode::load_opcode_table;
use proptest::prelude::*;

fn defined() -> Vec<u8> {
    load_opcode_table().defined().iter().copied().collect()
}

fn opcode() -> impl Strategy<Value = u8> + Clone {
    proptest::sample::select(defined())
}

fn small_opcode() -> impl Strategy<Value = u8> + Clone {
    proptest::sample::select(defined()[..6].to_vec())
}

fn method(op: impl Strategy<Value = u8>, max: usize) -> impl Strategy<Value = OpcodeSeq> {
    (0u8..3, proptest::collection::vec(op, 0..max)).prop_map(|(c, ops)| OpcodeSeq::new(format!("Lp/C{c};"), "m()V", ops))
}

fn corpus(classes: usize, op: impl Strategy<Value = u8> + Clone) -> impl Strategy<Value = Vec<AppRecord>> {
    proptest::collection::vec((proptest::collection::vec(method(op, 12), 0..4), 0..classes), 1..14).prop_map(|apps| {
        apps.into_iter()
            .enumerate()
            .map(|(i, (mut methods, c))| {
                methods.sort_by(|a, b| a.class_name.cmp(&b.class_name));
                AppRecord::new(format!("app{i:03}"), methods).unwrap().with_label(format!("c{c}"))
            })
            .collect()
    })
}

/// Brute-force gain straight from per-sample bucket assignments.
fn brute_ig(buckets: &[usize], labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let h = |group: &[usize]| -> f64 {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for &y in group {
            *counts.entry(y).or_default() += 1.0;
        }
        let m = group.len() as f64;
        counts.values().map(|c| -(c / m) * (c / m).log2()).sum()
    };
    let mut cond = 0.0;
    for b in buckets.iter().collect::<BTreeSet<_>>() {
        let group: Vec<usize> = buckets.iter().zip(labels).filter(|(x, _)| *x == b).map(|(_, &y)| y).collect();
        cond += group.len() as f64 / n * h(&group);
    }
    (h(labels) - cond).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn opseq_round_trip(apps in corpus(2, opcode())) {
        let mut buf = Vec::new();
        write_opseq(&apps, &mut buf).unwrap();
        let back = read_opseq(&buf[..]).unwrap();
        let strip = |a: &[AppRecord]| a.iter().map(|x| (x.app_id.clone(), x.methods.clone())).collect::<Vec<_>>();
        prop_assert_eq!(strip(&back), strip(&apps));
    }

    #[test]
    fn window_counts(ops in proptest::collection::vec(opcode(), 0..40), n in 1usize..11) {
        let seq = OpcodeSeq::new("LA;", "f()V", ops.clone());
        let total: u32 = extract_ngrams(&seq, n).values().sum();
        prop_assert_eq!(total as usize, (ops.len() + 1).saturating_sub(n));
    }

    #[test]
    fn vocabulary_merge_is_order_independent(apps in corpus(2, small_opcode()), split in 0usize..14, n in 1usize..4) {
        let split = split.min(apps.len());
        let (a, b) = apps.split_at(split);
        let whole = build_vocabulary(&apps, n);
        let ab = merge_vocab(&build_vocabulary(a, n), &build_vocabulary(b, n)).unwrap();
        let ba = merge_vocab(&build_vocabulary(b, n), &build_vocabulary(a, n)).unwrap();
        prop_assert_eq!(&ab, &whole);
        prop_assert_eq!(&ba, &whole);
    }

    #[test]
    fn binary_is_indicator_of_frequency(apps in corpus(2, small_opcode()), n in 1usize..4) {
        let vocab = build_vocabulary(&apps, n);
        for app in &apps {
            let f = featurize(app, &vocab, n, FeatureMode::Frequency).unwrap();
            let b = featurize(app, &vocab, n, FeatureMode::Binary).unwrap();
            let ind: Vec<(u32, u32)> = f.pairs().iter().map(|&(i, _)| (i, 1)).collect();
            prop_assert_eq!(b.pairs(), &ind[..]);
        }
    }

    #[test]
    fn gain_matches_brute_force(apps in corpus(4, small_opcode()), bins in 1usize..5) {
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
        let dense = ds.to_dense();
        for f in 0..ds.num_features() {
            let col: Vec<u32> = dense.iter().map(|r| r[f]).collect();
            let presence: Vec<usize> = col.iter().map(|&v| (v > 0) as usize).collect();
            let got = info_gain(&contingency_of(&ds, f, Discretizer::Presence).unwrap()).unwrap();
            prop_assert!((got - brute_ig(&presence, ds.targets())).abs() < 1e-9);

            let nz: Vec<u32> = col.iter().copied().filter(|&v| v > 0).collect();
            let (lo, hi) = (*nz.iter().min().unwrap_or(&0), *nz.iter().max().unwrap_or(&0));
            let binned: Vec<usize> = col
                .iter()
                .map(|&v| {
                    if v == 0 || hi == lo {
                        0
                    } else {
                        (((v - lo) as f64 * bins as f64 / (hi - lo) as f64) as usize).min(bins - 1)
                    }
                })
                .collect();
            let got = info_gain(&contingency_of(&ds, f, Discretizer::EqualWidth(bins)).unwrap()).unwrap();
            prop_assert!((got - brute_ig(&binned, ds.targets())).abs() < 1e-9);
        }
    }

    #[test]
    fn gain_ignores_sample_order(apps in corpus(3, small_opcode()), seed in any::<u64>()) {
        let ds = LabeledDataset::from_corpus(&apps, 2, FeatureMode::Binary).unwrap();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        use rand::{seq::SliceRandom, SeedableRng};
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = ds.subset_rows(&order);
        prop_assert_eq!(rank(&ds, Discretizer::Presence, 3), rank(&shuffled, Discretizer::Presence, 7));
    }

    #[test]
    fn random_shard_partitions_merge_exactly(apps in corpus(3, small_opcode()), shards in 1usize..8, seed in any::<u64>()) {
        let ds = LabeledDataset::from_corpus(&apps, 2, FeatureMode::Frequency).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut parts = vec![Vec::new(); shards];
        for f in 0..ds.num_features() {
            parts[rng.gen_range(0..shards)].push(f);
        }
        for disc in [Discretizer::Presence, Discretizer::EqualWidth(3)] {
            let merged = merge_rankings(parts.iter().map(|p| rank_shard(&ds.column_shard(p), disc)).collect()).unwrap();
            prop_assert_eq!(merged, rank(&ds, disc, usize::MAX));
        }
    }

    #[test]
    fn selection_is_monotone(apps in corpus(2, small_opcode()), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, k in 0usize..20) {
        let ds = LabeledDataset::from_corpus(&apps, 2, FeatureMode::Binary).unwrap();
        let r = rank(&ds, Discretizer::Presence, 4);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let loose = select(&r, SelectionRule::Threshold(lo));
        let strict = select(&r, SelectionRule::Threshold(hi));
        prop_assert!(strict.is_subset(&loose));
        let top = select(&r, SelectionRule::TopK(k));
        prop_assert!(top.is_subset(&select(&r, SelectionRule::TopK(k + 1))));
        prop_assert_eq!(top.len(), k.min(ds.num_features()));
    }

    #[test]
    fn contingency_gain_bounds(counts in proptest::collection::vec(proptest::collection::vec(0u64..20, 2..5), 1..5)) {
        let width = counts[0].len();
        let counts: Vec<Vec<u64>> = counts.into_iter().map(|mut r| { r.resize(width, 0); r }).collect();
        let t = ContingencyTable::from_counts(counts.clone()).unwrap();
        if t.total() == 0 {
            prop_assert!(info_gain(&t).is_err());
        } else {
            let ig = info_gain(&t).unwrap();
            let mut buckets = Vec::new();
            let mut labels = Vec::new();
            for (b, row) in counts.iter().enumerate() {
                for (c, &k) in row.iter().enumerate() {
                    for _ in 0..k { buckets.push(b); labels.push(c); }
                }
            }
            prop_assert!((ig - brute_ig(&buckets, &labels)).abs() < 1e-9);
            prop_assert!(ig >= 0.0 && ig <= (width as f64).log2() + 1e-12);
        }
    }

    #[test]
    fn folds_are_stratified(apps in corpus(3, small_opcode()), k in 2usize..5, seed in any::<u64>()) {
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary).unwrap();
        prop_assume!(ds.len() >= k);
        let folds = stratified_folds(&ds, k, seed).unwrap();
        let mut tested: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        tested.sort_unstable();
        prop_assert_eq!(tested, (0..ds.len()).collect::<Vec<_>>());
        for c in 0..ds.label_set().len() {
            let per: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&r| ds.targets()[r] == c).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn nb_posteriors_are_normalized(apps in corpus(3, small_opcode()), mode_bit in any::<bool>(), probe in proptest::collection::vec(0u32..5, 0..30)) {
        let mode = if mode_bit { FeatureMode::Binary } else { FeatureMode::Frequency };
        let ds = LabeledDataset::from_corpus(&apps, 1, mode).unwrap();
        prop_assume!(ds.num_features() > 0);
        let model = train(&ds, &"nb".parse().unwrap()).unwrap();
        let d = ds.num_features() as u32;
        let pairs: BTreeMap<u32, u32> = probe.chunks(2).filter(|c| c.len() == 2).map(|c| (c[0] % d, c[1] + 1)).collect();
        let v = SparseVector::from_pairs(pairs.into_iter().collect(), mode).unwrap();
        let p = model.predict(&v).unwrap();
        prop_assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(p.label_index, first_max(&p.scores));
    }
}

fn first_max(s: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..s.len() {
        if s[i] > s[best] {
            best = i;
        }
    }
    best
}

#[test]
fn arff_lists_every_gram() {
    let apps: Vec<AppRecord> = (0..3)
        .map(|i| AppRecord::new(format!("a{i}"), vec![OpcodeSeq::new("LA;", "f()V", vec![0x12, 0x0e, 0x6e][..=i].to_vec())]).unwrap().with_label(if i == 0 { "benign" } else { "malware" }))
        .collect();
    let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
    let mut out = Vec::new();
    export_arff(&ds, "t", &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.matches("@attribute ").count(), ds.num_features() + 1);
    assert_eq!(text.lines().filter(|l| l.starts_with('{')).count(), 3);
}
