use embclass::eval::{
    few_shot_eval, real_accuracy, top1_accuracy, EvalReport, FewShotConfig, GroundTruth,
};
use embclass::fusion::{
    assign_folds, fuse_predictions, select_k_cv, train_fusion, FusionModel, PrecisionTable,
};
use embclass::knn::{classify_knn, exclude_self, sweep_k, top_k, NeighborList, PairingPolicy};
use embclass::store::subset;
use embclass::synth;
use embclass::zeroshot::{
    build_prototypes, classify_zeroshot, per_template_predictions, prompt_space_knn,
    TemplateSelection,
};
use embclass::{
    load_store, save_store, DatasetManifest, EmbeddingStore, Error, LabelSet, PredictionSet,
    PromptBank,
};

#[test]
fn stores_and_banks_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth::blob_fixture(6, 10, 4, 16, 0.5, 3, 1);

    let train_path = dir.path().join("train.emb");
    let manifest = DatasetManifest::new(6);
    save_store(&fx.train, &fx.train_labels, &manifest, &train_path).unwrap();
    let (train, labels, m) = load_store(&train_path).unwrap();
    assert_eq!(train, fx.train);
    assert_eq!(labels, fx.train_labels);
    assert_eq!(m.data_sha256, fx.train.data_sha256());

    let bank_path = dir.path().join("bank.emb");
    save_store(fx.bank.store(), fx.bank.labels(), &fx.bank.to_manifest(), &bank_path).unwrap();
    let bank = PromptBank::load(&bank_path).unwrap();
    assert_eq!(bank.templates(), fx.bank.templates());
    assert_eq!(bank.store(), fx.bank.store());
}

#[test]
fn cleaner_subset_and_real_accuracy() {
    let (store, labels) = synth::gaussian_blobs(3, 4, 8, 0.2, 2, "v");
    let mut manifest = DatasetManifest::new(3);
    let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
    manifest.cleaner_mask = Some(mask.clone());
    manifest.multi_labels = Some(
        (0..12)
            .filter(|i| i % 3 != 0)
            .map(|i| if i == 1 { vec![1, 0] } else { vec![i as u32 % 3] })
            .collect(),
    );
    let truth = GroundTruth::cleaner(&store, &manifest).unwrap();
    assert_eq!(truth.len(), 8);

    let preds = PredictionSet::new(
        store.sample_ids().to_vec(),
        (0..12).map(|_| 0).collect(),
        3,
        "all zero",
    )
    .unwrap();
    let aligned = preds.align_to(truth.sample_ids()).unwrap();
    // only sample 1 lists class 0
    assert_eq!(real_accuracy(&aligned, &truth).unwrap(), 1.0 / 8.0);

    let report = EvalReport::evaluate(&preds, &GroundTruth::from_store(&store, &labels).unwrap())
        .unwrap()
        .with_real(&preds, &truth)
        .unwrap();
    assert_eq!(report.top1, Some(4.0 / 12.0));
    assert_eq!(report.real, Some(1.0 / 8.0));

    let (s2, _, m2) = subset(&store, &labels, &manifest, &mask).unwrap();
    assert_eq!(s2.n(), 8);
    assert!(m2.cleaner_mask.unwrap().iter().all(|&b| b));
    assert_eq!(m2.multi_labels.unwrap().len(), 8);

    let mut bare = manifest.clone();
    bare.multi_labels = None;
    assert!(GroundTruth::cleaner(&store, &bare).is_err());
}

#[test]
fn self_exclusion_uses_sample_ids() {
    let (store, labels) = synth::gaussian_blobs(4, 5, 8, 0.3, 3, "s");
    let policy = exclude_self(&store, &store);
    let nl = top_k(&store, &store, 3, &policy).unwrap();
    for i in 0..store.n() {
        assert!(nl.query(i).iter().all(|n| n.index as usize != i));
    }
    let plain = classify_knn(&store, &store, &labels, 1, &PairingPolicy::include_all()).unwrap();
    assert_eq!(plain.classes(), (0..20).map(|i| i % 4).collect::<Vec<u32>>().as_slice());
}

#[test]
fn neighbor_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nn.emb");
    let refs = synth::random_unit_store(50, 6, 1, "r");
    let q = synth::random_unit_store(7, 6, 2, "q");
    let nl = top_k(&q, &refs, 5, &PairingPolicy::include_all()).unwrap();
    nl.save(&path, q.sample_ids()).unwrap();
    let (back, ids) = NeighborList::load(&path).unwrap();
    assert_eq!(back, nl);
    assert_eq!(ids, q.sample_ids());
    assert!(load_store(&path).is_err());
}

/// Independent re-implementation of stratified CV used to cross-check
/// `select_k_cv`: folds from the public assignment, brute-force neighbors.
fn cv_oracle(store: &EmbeddingStore, labels: &LabelSet, ks: &[usize], folds: usize, seed: u64) -> usize {
    let assignment = assign_folds(labels, folds, seed);
    let mut mean = vec![0.0; ks.len()];
    let mut used = 0;
    for f in 0..folds as u32 {
        let held: Vec<usize> = (0..store.n()).filter(|&i| assignment[i] == f).collect();
        if held.is_empty() {
            continue;
        }
        used += 1;
        for (j, &k) in ks.iter().enumerate() {
            let mut correct = 0;
            for &i in &held {
                let mut sims: Vec<(f64, usize)> = (0..store.n())
                    .filter(|&r| assignment[r] != f)
                    .map(|r| {
                        let s: f64 = store
                            .row(i)
                            .iter()
                            .zip(store.row(r))
                            .map(|(&a, &b)| f64::from(a) * f64::from(b))
                            .sum();
                        (s, r)
                    })
                    .collect();
                sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let mut votes = vec![(0usize, 0.0f64); labels.class_count() as usize];
                for &(s, r) in &sims[..k] {
                    let c = labels.primary(r) as usize;
                    votes[c].0 += 1;
                    votes[c].1 += s;
                }
                let mut best = 0;
                for c in 1..votes.len() {
                    if votes[c].0 > votes[best].0
                        || (votes[c].0 == votes[best].0 && votes[c].1 > votes[best].1)
                    {
                        best = c;
                    }
                }
                correct += usize::from(best as u32 == labels.primary(i));
            }
            mean[j] += correct as f64 / held.len() as f64;
        }
    }
    let mut best = 0;
    for j in 1..ks.len() {
        if mean[j] / used as f64 > mean[best] / used as f64 {
            best = j;
        }
    }
    ks[best]
}

#[test]
fn cv_matches_independent_oracle() {
    for seed in 0..5 {
        let (store, labels) = synth::gaussian_blobs(3, 30, 8, 1.6, seed, "b");
        let cv = select_k_cv(&store, &labels, &[1, 3, 5], 10, seed).unwrap();
        assert_eq!(cv.best_k, cv_oracle(&store, &labels, &[1, 3, 5], 10, seed), "seed {seed}");
    }
}

#[test]
fn fusion_degenerate_tables() {
    let fx = synth::blob_fixture(5, 10, 6, 8, 1.0, 2, 9);
    let protos = build_prototypes(&fx.bank, &TemplateSelection::AvgPrime, true).unwrap();
    let lang = classify_zeroshot(&fx.eval, &protos).unwrap();
    let vis = classify_knn(&fx.eval, &fx.train, &fx.train_labels, 3, &PairingPolicy::include_all())
        .unwrap();

    let zero_lang = FusionModel::from_tables(
        PrecisionTable::from_values(vec![0.0; 5]),
        PrecisionTable::from_values(vec![0.7; 5]),
        3,
    );
    assert_eq!(fuse_predictions(&lang, &vis, &zero_lang).unwrap().classes(), vis.classes());

    let lang_wins = FusionModel::from_tables(
        PrecisionTable::from_values(vec![1.0; 5]),
        PrecisionTable::from_values(vec![0.0; 5]),
        3,
    );
    assert_eq!(fuse_predictions(&lang, &vis, &lang_wins).unwrap().classes(), lang.classes());
}

#[test]
fn agreeing_classifiers_fall_back_to_vision() {
    // well separated blobs: both classifiers are perfect on the training set
    let fx = synth::blob_fixture(4, 20, 5, 16, 0.1, 2, 4);
    let m = train_fusion(
        &fx.train,
        &fx.train_labels,
        &fx.bank,
        &TemplateSelection::AvgPrime,
        &[1, 3],
        5,
        42,
    )
    .unwrap();
    assert!(m.precision_language.precision.iter().all(|&p| p == 1.0));
    assert!(m.precision_vision.precision.iter().all(|&p| p == 1.0));
    assert_eq!(m.chosen_k, 1);
}

#[test]
fn complementary_tables_split_by_half() {
    let fx = synth::complementary(10, 5, 40, 5, 2);
    let m = train_fusion(
        &fx.train,
        &fx.train_labels,
        &fx.bank,
        &TemplateSelection::AvgPrime,
        &[1, 3, 5, 7],
        10,
        42,
    )
    .unwrap();
    assert!(m.precision_language.precision[..5].iter().all(|&p| p == 1.0));
    assert!(m.precision_vision.precision[5..].iter().all(|&p| p == 1.0));
}

#[test]
fn few_shot_accuracy_grows_with_m() {
    let fx = synth::blob_fixture(10, 60, 20, 16, 1.3, 1, 21);
    let truth = GroundTruth::from_store(&fx.eval, &fx.eval_labels).unwrap();
    let mut cfg = FewShotConfig::new(vec![1, 2, 5, 10, 20, 40], vec![1], 42);
    cfg.trials = Some(25);
    let t = few_shot_eval(&fx.train, &fx.train_labels, &fx.eval, &truth, &cfg).unwrap();
    let means: Vec<f64> = t.cells.iter().map(|c| c.mean).collect();
    let inversions = means.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(inversions <= 1, "{means:?}");
    assert!(t.cells.iter().all(|c| c.half_width > 0.0));
}

#[test]
fn sweep_and_templates() {
    let fx = synth::blob_fixture(6, 15, 8, 12, 0.8, 3, 5);
    let sweep = sweep_k(
        &fx.eval,
        &fx.train,
        &fx.train_labels,
        &[1, 5, 9],
        &fx.eval_labels,
        &PairingPolicy::include_all(),
    )
    .unwrap();
    let truth = GroundTruth::from_store(&fx.eval, &fx.eval_labels).unwrap();
    for (k, acc) in sweep.ks.iter().zip(&sweep.accuracy) {
        let p = classify_knn(&fx.eval, &fx.train, &fx.train_labels, *k, &PairingPolicy::include_all())
            .unwrap();
        assert_eq!(top1_accuracy(&p, &truth).unwrap(), *acc);
    }
    let per_t = per_template_predictions(&fx.eval, &fx.bank).unwrap();
    assert_eq!(per_t.len(), 3);
    assert_eq!(per_t[2].variant(), "{}");
    assert!(prompt_space_knn(&fx.eval, &fx.bank, 11).is_ok());
}

#[test]
fn mismatched_inputs_are_errors() {
    let a = synth::random_unit_store(5, 4, 1, "a");
    let b = synth::random_unit_store(5, 3, 1, "b");
    assert!(matches!(
        top_k(&a, &b, 1, &PairingPolicy::include_all()),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(
        top_k(&a, &a, 6, &PairingPolicy::include_all()),
        Err(Error::KTooLarge { .. })
    ));
    let labels = LabelSet::from_single(vec![0; 4], 1);
    assert!(classify_knn(&a, &a, &labels, 1, &PairingPolicy::include_all()).is_err());
}
