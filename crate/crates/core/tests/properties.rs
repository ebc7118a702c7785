use proptest::prelude::*;

use embclass::eval::{
    accuracy_shift, class_level_oracle, image_level_oracle, per_class_accuracy, top1_accuracy,
    GroundTruth,
};
use embclass::fusion::{fuse_predict, per_class_precision, FusionModel, PrecisionTable};
use embclass::knn::{top_k, PairingPolicy};
use embclass::zeroshot::{build_prototypes, TemplateSelection};
use embclass::{EmbeddingStore, LabelSet, PredictionSet, PromptBank, Role, VariantFamily};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// Rows drawn with repetition from a small pool, so exact ties are common.
fn pooled_store(d: usize, pool: &[Vec<f32>], picks: &[usize], prefix: &str) -> EmbeddingStore {
    let data: Vec<f32> = picks.iter().flat_map(|&p| pool[p % pool.len()].clone()).collect();
    EmbeddingStore::with_numbered_ids(d, data, prefix, Role::Image).unwrap()
}

fn naive(q: &EmbeddingStore, r: &EmbeddingStore, k: usize) -> Vec<Vec<u32>> {
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    (0..q.n())
        .map(|i| {
            let qi = q.row(i);
            let mut s: Vec<(f64, u32)> = (0..r.n())
                .map(|j| {
                    let rj = r.row(j);
                    let dot: f64 = qi.iter().zip(rj).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
                    let den = norm(qi) * norm(rj);
                    (if den > 0.0 { dot / den } else { 0.0 }, j as u32)
                })
                .collect();
            s.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            s.into_iter().take(k).map(|x| x.1).collect()
        })
        .collect()
}

fn family_strategy() -> impl Strategy<Value = (Vec<u32>, Vec<Vec<u32>>)> {
    (5usize..60, 2u32..8, 1usize..6).prop_flat_map(|(n, c, m)| {
        (
            prop::collection::vec(0..c, n),
            prop::collection::vec(prop::collection::vec(0..c, n), m),
        )
    })
}

fn family(classes: &[Vec<u32>], c: u32) -> VariantFamily {
    let n = classes[0].len();
    VariantFamily::new(
        "f",
        classes
            .iter()
            .enumerate()
            .map(|(i, p)| PredictionSet::new(ids(n), p.clone(), c, format!("m{i}")).unwrap())
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_naive_with_ties(
        d in 1usize..6,
        pool_size in 1usize..6,
        ref_picks in prop::collection::vec(0usize..6, 1..40),
        query_picks in prop::collection::vec(0usize..6, 1..8),
        seed in any::<u64>(),
        k_pick in 0usize..100,
    ) {
        let pool = embclass::synth::random_unit_store(pool_size, d, seed, "p");
        let pool: Vec<Vec<f32>> = (0..pool.n()).map(|i| pool.row(i).to_vec()).collect();
        let refs = pooled_store(d, &pool, &ref_picks, "r");
        let q = pooled_store(d, &pool, &query_picks, "q");
        let nr = refs.n();
        let k = 1 + k_pick % nr;
        let nl = top_k(&q, &refs, k, &PairingPolicy::include_all()).unwrap();
        let expect = naive(&q, &refs, k);
        for i in 0..q.n() {
            let got: Vec<u32> = nl.query(i).iter().map(|n| n.index).collect();
            prop_assert_eq!(&got, &expect[i]);
        }
    }

    #[test]
    fn oracle_chain_holds((truth, members) in family_strategy()) {
        let c = 8;
        let gt = GroundTruth::new(ids(truth.len()), LabelSet::from_single(truth, c)).unwrap();
        let f = family(&members, c);
        let best = f.members().iter().map(|p| top1_accuracy(p, &gt).unwrap()).fold(0.0, f64::max);
        let class = class_level_oracle(&f, &gt).unwrap().accuracy;
        let image = image_level_oracle(&f, &gt).unwrap();
        prop_assert!(image >= class);
        prop_assert!(class >= best);
        let single = family(&members[..1], c);
        prop_assert_eq!(
            class_level_oracle(&single, &gt).unwrap().accuracy,
            top1_accuracy(&single.members()[0], &gt).unwrap()
        );
    }

    #[test]
    fn precision_counts_add_up((truth, members) in family_strategy()) {
        let c = 8;
        let gt = GroundTruth::new(ids(truth.len()), LabelSet::from_single(truth, c)).unwrap();
        let p = PredictionSet::new(ids(members[0].len()), members[0].clone(), c, "p").unwrap();
        let t = per_class_precision(&p, &gt).unwrap();
        let correct = (top1_accuracy(&p, &gt).unwrap() * p.len() as f64).round() as u64;
        prop_assert_eq!(t.tp.iter().sum::<u64>(), correct);
        prop_assert_eq!(t.tp.iter().chain(&t.fp).sum::<u64>(), p.len() as u64);
        for (v, ok) in t.precision.iter().zip(&t.defined) {
            prop_assert!((0.0..=1.0).contains(v));
            if !ok {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn weighted_class_mean_is_top1((truth, members) in family_strategy()) {
        let c = 8;
        let gt = GroundTruth::new(ids(truth.len()), LabelSet::from_single(truth.clone(), c)).unwrap();
        let p = PredictionSet::new(ids(truth.len()), members[0].clone(), c, "p").unwrap();
        let per = per_class_accuracy(&p, &gt).unwrap();
        let mut weighted = 0.0;
        for (class, acc) in per.iter().enumerate() {
            let count = truth.iter().filter(|&&t| t as usize == class).count();
            match acc {
                Some(a) => weighted += a * count as f64,
                None => prop_assert_eq!(count, 0),
            }
        }
        let top1 = top1_accuracy(&p, &gt).unwrap();
        prop_assert!((weighted / truth.len() as f64 - top1).abs() < 1e-12);
    }

    #[test]
    fn agreement_survives_fusion(
        lang in prop::collection::vec(0.0f64..=1.0, 6),
        vis in prop::collection::vec(0.0f64..=1.0, 6),
        p in 0u32..6,
    ) {
        let m = FusionModel::from_tables(
            PrecisionTable::from_values(lang),
            PrecisionTable::from_values(vis),
            1,
        );
        prop_assert_eq!(fuse_predict(p, p, &m), p);
    }

    #[test]
    fn shift_cardinality(
        a in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..=1.0), 1..60),
        seed in any::<u64>(),
        top_n in 0usize..8,
    ) {
        let b: Vec<Option<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, v)| v.map(|x| (x + (seed % 97) as f64 * 0.01 * i as f64) % 1.0))
            .collect();
        let present = a.iter().filter(|v| v.is_some()).count();
        let s = accuracy_shift(&a, &b, top_n).unwrap();
        prop_assert_eq!(s.len(), (2 * top_n).min(present));
        let mut classes: Vec<u32> = s.iter().map(|x| x.class).collect();
        classes.sort_unstable();
        classes.dedup();
        prop_assert_eq!(classes.len(), s.len());
    }

    #[test]
    fn prototypes_ignore_template_order(
        perm_seed in any::<u64>(),
        t in 2usize..6,
    ) {
        let bank: PromptBank = embclass::synth::random_bank(t, 5, 8, perm_seed);
        let mut order: Vec<usize> = (0..t).collect();
        order.rotate_left((perm_seed % t as u64) as usize);
        order.reverse();
        let a = build_prototypes(&bank, &TemplateSelection::Custom(order), false).unwrap();
        let b = build_prototypes(&bank, &TemplateSelection::AvgPrime, false).unwrap();
        prop_assert_eq!(a.store().data(), b.store().data());
    }
}
