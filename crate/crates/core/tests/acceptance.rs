//! Acceptance checks. Run with `cargo test -p embclass-core --test acceptance`;
//! prints one PASS/FAIL line per check and exits non-zero on any failure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use embclass::eval::{
    ci_95, class_level_oracle, double_oracle, few_shot_eval, image_level_oracle, oracle,
    real_accuracy, top1_accuracy, FewShotConfig, GroundTruth, OracleLevel,
};
use embclass::fusion::{
    fuse_predict, fuse_predictions, train_fusion, FusionModel, PrecisionTable,
};
use embclass::knn::{classify_knn, sweep_k, top_k, top_k_with, KnnConfig, PairingPolicy};
use embclass::synth;
use embclass::zeroshot::{build_prototypes, classify_zeroshot, TemplateSelection};
use embclass::{
    load_store, save_store, DatasetManifest, EmbeddingStore, LabelSet, PredictionSet,
    VariantFamily,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn naive_top_k(q: &[f32], refs: &EmbeddingStore, k: usize) -> Vec<(u32, f64)> {
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut all: Vec<(u32, f64)> = (0..refs.n())
        .map(|j| {
            let r = refs.row(j);
            let dot: f64 = q.iter().zip(r).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (j as u32, dot / (qn * norm(r)))
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn knn_oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ks = [1, 5, 9, 51];
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let n = rng.random_range(51..=2000);
        let nq = rng.random_range(1..=200);
        let d = rng.random_range(1..=128);
        let k = ks[trial as usize % ks.len()];
        let refs = synth::random_unit_store(n, d, 1000 + trial, "r");
        let queries = synth::random_unit_store(nq, d, 5000 + trial, "q");
        let nl = top_k(&queries, &refs, k, &PairingPolicy::include_all())
            .map_err(|e| format!("trial {trial}: {e}"))?;
        for i in 0..nq {
            let expect = naive_top_k(queries.row(i), &refs, k);
            let got = nl.query(i);
            for (g, e) in got.iter().zip(&expect) {
                ensure(g.index == e.0, || {
                    format!("trial {trial} (n={n}, d={d}, k={k}) query {i}: index {} != {}", g.index, e.0)
                })?;
                worst = worst.max((f64::from(g.similarity) - e.1).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-5, || format!("similarity error {worst:e} > 1e-5"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("50 trials, max |sim error| {worst:.1e}, {secs:.1} s"))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn determinism() -> Check {
    let fx = synth::blob_fixture(12, 40, 10, 32, 0.9, 4, 11);
    let truth = GroundTruth::from_store(&fx.eval, &fx.eval_labels).unwrap();
    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = || {
        let knn = classify_knn(&fx.eval, &fx.train, &fx.train_labels, 9, &PairingPolicy::include_all())
            .unwrap();
        let sweep = sweep_k(
            &fx.eval,
            &fx.train,
            &fx.train_labels,
            &[1, 3, 5, 7, 9, 11, 13, 51],
            &fx.eval_labels,
            &PairingPolicy::include_all(),
        )
        .unwrap();
        let mut cfg = FewShotConfig::new(vec![1, 5, 10], vec![1, 5, 9], 42);
        cfg.trials = Some(8);
        let few = few_shot_eval(&fx.train, &fx.train_labels, &fx.eval, &truth, &cfg).unwrap();
        let model = train_fusion(
            &fx.train,
            &fx.train_labels,
            &fx.bank,
            &TemplateSelection::AvgPrime,
            &[1, 3, 5, 7, 9],
            10,
            42,
        )
        .unwrap();
        let few_bits: Vec<(u64, u64)> = few
            .cells
            .iter()
            .map(|c| (c.mean.to_bits(), c.half_width.to_bits()))
            .collect();
        let acc_bits: Vec<u64> = sweep.accuracy.iter().map(|a| a.to_bits()).collect();
        (
            knn,
            sweep.predictions,
            acc_bits,
            few_bits,
            serde_json::to_string(&model).unwrap(),
        )
    };
    let base = in_pool(1, run);
    for threads in [4, max] {
        let other = in_pool(threads, run);
        ensure(other == base, || format!("outputs differ at {threads} threads"))?;
    }
    Ok(format!("identical at 1, 4 and {max} threads"))
}

fn random_family(rng: &mut ChaCha8Rng, truth: &[u32], c: u32) -> VariantFamily {
    let n = truth.len();
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let members = rng.random_range(2..=8);
    let sets = (0..members)
        .map(|m| {
            let skill: f64 = rng.random_range(0.1..0.9);
            let classes = truth
                .iter()
                .map(|&t| {
                    if rng.random_bool(skill) {
                        t
                    } else {
                        rng.random_range(0..c)
                    }
                })
                .collect();
            PredictionSet::new(ids.clone(), classes, c, format!("m{m}")).unwrap()
        })
        .collect();
    VariantFamily::new("random", sets).unwrap()
}

fn oracle_chain() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (c, n) = (50u32, 2000usize);
    for trial in 0..100 {
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let truth = GroundTruth::new(ids, LabelSet::from_single(labels.clone(), c)).unwrap();
        let v = random_family(&mut rng, &labels, c);
        let l = random_family(&mut rng, &labels, c);
        let best_member = v
            .members()
            .iter()
            .map(|p| top1_accuracy(p, &truth).unwrap())
            .fold(0.0, f64::max);
        let class = class_level_oracle(&v, &truth).unwrap().accuracy;
        let image = image_level_oracle(&v, &truth).unwrap();
        ensure(image >= class && class >= best_member, || {
            format!("trial {trial}: image {image} class {class} member {best_member}")
        })?;
        for level in [OracleLevel::Class, OracleLevel::Image] {
            let both = double_oracle(&v, &l, &truth, level).unwrap();
            let single = oracle(&v, &truth, level)
                .unwrap()
                .max(oracle(&l, &truth, level).unwrap());
            ensure(both >= single, || {
                format!("trial {trial}: double {level} oracle {both} < {single}")
            })?;
        }
    }
    Ok("100 families, chain and double-oracle bounds hold".into())
}

fn fusion_complementarity() -> Check {
    let fx = synth::complementary(50, 25, 60, 20, 3);
    let model = train_fusion(
        &fx.train,
        &fx.train_labels,
        &fx.bank,
        &TemplateSelection::AvgPrime,
        &[1, 3, 5, 7, 9, 11, 13, 51],
        10,
        42,
    )
    .map_err(|e| e.to_string())?;
    let truth = GroundTruth::from_store(&fx.eval, &fx.eval_labels).unwrap();
    let vision = classify_knn(
        &fx.eval,
        &fx.train,
        &fx.train_labels,
        model.chosen_k,
        &PairingPolicy::include_all(),
    )
    .unwrap();
    let protos = build_prototypes(&fx.bank, &TemplateSelection::AvgPrime, true).unwrap();
    let language = classify_zeroshot(&fx.eval, &protos).unwrap();
    let fused = fuse_predictions(&language, &vision, &model).unwrap();
    let (l, v, f) = (
        top1_accuracy(&language, &truth).unwrap(),
        top1_accuracy(&vision, &truth).unwrap(),
        top1_accuracy(&fused, &truth).unwrap(),
    );
    ensure(f == 1.0, || format!("fused {f}, language {l}, vision {v}"))?;
    ensure(l <= 0.75 && v <= 0.75, || format!("language {l}, vision {v} above 0.75"))?;
    Ok(format!("fused {f:.4}, language {l:.4}, vision {v:.4} (k={})", model.chosen_k))
}

fn fusion_rule_branches() -> Check {
    let values = [0.0, 0.5, 1.0];
    for &pl in &values {
        for &pv in &values {
            let model = FusionModel::from_tables(
                PrecisionTable::from_values(vec![pl, 0.0]),
                PrecisionTable::from_values(vec![0.0, pv]),
                1,
            );
            let got = fuse_predict(0, 1, &model);
            let expect = if pl > pv { 0 } else { 1 };
            ensure(got == expect, || format!("P_L={pl}, P_V={pv}: got {got}"))?;
            ensure(fuse_predict(1, 1, &model) == 1 && fuse_predict(0, 0, &model) == 0, || {
                "agreeing predictions changed".into()
            })?;
        }
    }
    Ok("9 precision pairs, language wins only when strictly higher".into())
}

fn real_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (c, n) = (20u32, 500usize);
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    for trial in 0..50 {
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let preds: Vec<u32> = labels
            .iter()
            .map(|&l| if rng.random_bool(0.6) { l } else { rng.random_range(0..c) })
            .collect();
        let p = PredictionSet::new(ids.clone(), preds, c, "p").unwrap();
        let single = GroundTruth::new(ids.clone(), LabelSet::from_single(labels.clone(), c)).unwrap();
        let (r, t) = (real_accuracy(&p, &single).unwrap(), top1_accuracy(&p, &single).unwrap());
        ensure(r == t, || format!("trial {trial}: real {r} != top-1 {t}"))?;

        let sets: Vec<Vec<u32>> = labels
            .iter()
            .map(|&l| {
                let mut s = vec![l];
                for _ in 0..rng.random_range(0..3) {
                    let extra = rng.random_range(0..c);
                    if !s.contains(&extra) {
                        s.push(extra);
                    }
                }
                s
            })
            .collect();
        let multi = GroundTruth::new(ids.clone(), LabelSet::from_sets(&sets, c)).unwrap();
        let r = real_accuracy(&p, &multi).unwrap();
        for _ in 0..5 {
            let pick: Vec<u32> = sets.iter().map(|s| s[rng.random_range(0..s.len())]).collect();
            let one = GroundTruth::new(ids.clone(), LabelSet::from_single(pick, c)).unwrap();
            let t = top1_accuracy(&p, &one).unwrap();
            ensure(r >= t, || format!("trial {trial}: real {r} < top-1 {t}"))?;
        }
    }
    Ok("50 single-label equalities, 250 member-label bounds".into())
}

fn prototype_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for b in 0..20u64 {
        let t = rng.random_range(1..=8);
        let c = rng.random_range(2..=100);
        let d = rng.random_range(2..=64);
        let bank = synth::random_bank(t, c, d, 300 + b);
        let images = synth::random_unit_store(400, d, 600 + b, "img");
        for sel in [TemplateSelection::AvgPrime, TemplateSelection::Single(t - 1)] {
            let raw = build_prototypes(&bank, &sel, false).unwrap();
            let unit = build_prototypes(&bank, &sel, true).unwrap();
            let a = classify_zeroshot(&images, &raw).unwrap();
            let u = classify_zeroshot(&images, &unit).unwrap();
            ensure(a.classes() == u.classes(), || format!("bank {b} ({sel}) argmax changed"))?;
        }
    }
    Ok("20 banks, argmax unchanged".into())
}

/// Student t quantile by bisection on a Simpson-integrated density.
fn t_quantile(p: f64, df: f64) -> f64 {
    fn ln_gamma(x: f64) -> f64 {
        const G: f64 = 7.0;
        const C: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, &c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
    let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (log_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let cdf = |x: f64| {
        let steps = 200_000;
        let h = x / steps as f64;
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..steps {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 1000.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ci_oracle() -> Check {
    let two = ci_95(&[0.5, 0.7]).map_err(|e| e.to_string())?;
    let s = (0.02f64).sqrt();
    let closed = 12.706_204_736_432_1 * s / 2.0f64.sqrt();
    let closed_tan = (std::f64::consts::PI * 0.475).tan() * s / 2.0f64.sqrt();
    ensure((two.mean - 0.6).abs() < 1e-12, || format!("mean {}", two.mean))?;
    ensure((two.half_width - closed_tan).abs() < 1e-9, || {
        format!("2 trials: half-width {} vs {closed_tan}", two.half_width)
    })?;
    ensure((two.half_width - closed).abs() < 1e-6, || format!("2 trials vs 12.706 s/sqrt 2: {}", two.half_width))?;

    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let trials: Vec<f64> = (0..50).map(|_| 0.7 + 0.05 * rng.random::<f64>()).collect();
    let got = ci_95(&trials).map_err(|e| e.to_string())?;
    let n = trials.len() as f64;
    let mean = trials.iter().sum::<f64>() / n;
    let sd = (trials.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let hw = t_quantile(0.975, n - 1.0) * sd / n.sqrt();
    ensure((got.mean - mean).abs() < 1e-12 && (got.half_width - hw).abs() < 1e-9, || {
        format!("50 trials: ({}, {}) vs oracle ({mean}, {hw})", got.mean, got.half_width)
    })?;
    Ok(format!("2-trial half-width {:.10}, 50-trial error {:.1e}", two.half_width, (got.half_width - hw).abs()))
}

fn store_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("fixture.emb");
    let (store, labels) = synth::gaussian_blobs(10, 20, 48, 0.4, 8, "img");
    let mut manifest = DatasetManifest::new(10);
    manifest.model = "synthetic".into();
    save_store(&store, &labels, &manifest, &path).map_err(|e| e.to_string())?;
    let (back, back_labels, _) = load_store(&path).map_err(|e| e.to_string())?;
    let exact = back.data().iter().zip(store.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(exact && back.sample_ids() == store.sample_ids() && back_labels == labels, || {
        "round trip not bit-exact".into()
    })?;

    let original = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut caught = 0;
    for _ in 0..100 {
        let mut bytes = original.clone();
        let pos = rng.random_range(0..bytes.len());
        bytes[pos] ^= 1 << rng.random_range(0..8);
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        if load_store(&path).is_err() {
            caught += 1;
        }
    }
    ensure(caught == 100, || format!("{caught}/100 corruptions caught"))?;
    Ok(format!("bit-exact, {caught}/100 corruptions caught"))
}

fn performance() -> Check {
    let threads = rayon::current_num_threads();
    let refs = synth::random_unit_store(100_000, 1024, 1, "r");
    let queries = synth::random_unit_store(10_000, 1024, 2, "q");
    let start = Instant::now();
    let nl = top_k_with(
        queries.rows(),
        refs.rows(),
        &KnnConfig::new(9),
        &PairingPolicy::include_all(),
    )
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(nl.len() == 10_000, || "wrong result count".into())?;
    ensure(secs <= 30.0, || format!("{secs:.1} s on {threads} threads"))?;
    Ok(format!("{secs:.1} s on {threads} threads"))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("knn oracle equivalence", knn_oracle_equivalence),
        ("determinism across thread counts", determinism),
        ("oracle inequality chain", oracle_chain),
        ("fusion complementarity", fusion_complementarity),
        ("fusion rule branches", fusion_rule_branches),
        ("real accuracy reduction", real_reduction),
        ("prototype argmax invariance", prototype_invariance),
        ("confidence interval oracle", ci_oracle),
        ("store round trip and corruption", store_round_trip),
        ("top-9 performance target", performance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
