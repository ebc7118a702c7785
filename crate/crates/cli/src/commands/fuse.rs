use std::collections::BTreeMap;

use serde::Serialize;

use embclass::fusion::{fuse_predictions, train_fusion};
use embclass::knn::{sweep_k, PairingPolicy};
use embclass::{build_prototypes, classify_knn, classify_zeroshot, EvalReport};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{ensure_inputs, load_bank, load_images, opt_pct, render_table, Outputs};

use super::eval::evaluate;

#[derive(Debug, Serialize)]
pub struct FuseSummary {
    pub model: String,
    /// k chosen by cross-validation on the training split.
    pub cv_k: usize,
    /// k with the best accuracy on the eval split itself.
    pub eval_best_k: usize,
    pub language: EvalReport,
    pub vision: EvalReport,
    pub vision_eval_best_k: EvalReport,
    pub fused: EvalReport,
    pub provenance: BTreeMap<String, String>,
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_inputs(cfg)?;
    let train = load_images(&cfg.data.train, "data.train")?;
    let eval = load_images(&cfg.data.eval, "data.eval")?;
    let bank = load_bank(cfg)?;
    let selection = cfg.fuse_templates()?;

    let model = train_fusion(
        &train.store,
        &train.labels,
        &bank,
        &selection,
        &cfg.fuse.k_grid,
        cfg.fuse.folds,
        cfg.seed,
    )?;
    let protos = build_prototypes(&bank, &selection, true)?;
    let language = classify_zeroshot(&eval.store, &protos)?;
    let all = PairingPolicy::include_all();
    let vision = classify_knn(&eval.store, &train.store, &train.labels, model.chosen_k, &all)?;
    let sweep = sweep_k(
        &eval.store,
        &train.store,
        &train.labels,
        &cfg.fuse.k_grid,
        &eval.labels,
        &all,
    )?;
    let (best_k, _) = sweep.best().expect("non-empty grid");
    let best_at = sweep.ks.iter().position(|&k| k == best_k).expect("k in grid");
    let fused = fuse_predictions(&language, &vision, &model)?;

    let real = cfg.eval.real;
    let mut provenance = BTreeMap::new();
    provenance.insert("train_sha256".to_string(), train.sha256().to_string());
    provenance.insert("eval_sha256".to_string(), eval.sha256().to_string());
    provenance.insert("bank_sha256".to_string(), bank.store().data_sha256());
    provenance.insert("seed".to_string(), cfg.seed.to_string());
    provenance.insert("folds".to_string(), cfg.fuse.folds.to_string());
    provenance.insert("templates".to_string(), selection.to_string());
    provenance.insert("language_protocol".to_string(), model.language_protocol.clone());
    provenance.insert("vision_protocol".to_string(), model.vision_protocol.clone());

    let mut out = Outputs::create(cfg)?;
    let model_path = out.path("fusion-model.json");
    model.save(&model_path)?;
    let summary = FuseSummary {
        model: "fusion-model.json".into(),
        cv_k: model.chosen_k,
        eval_best_k: best_k,
        language: evaluate(&language, &eval, real)?,
        vision: evaluate(&vision, &eval, real)?,
        vision_eval_best_k: evaluate(&sweep.predictions[best_at], &eval, real)?,
        fused: evaluate(&fused, &eval, real)?,
        provenance,
    };
    out.json("fuse.json", &summary)?;

    let c = model.class_count();
    let rows: Vec<Vec<String>> = (0..c)
        .map(|class| {
            let acc = |r: &EvalReport| {
                r.per_class
                    .get(class)
                    .copied()
                    .flatten()
                    .map(|a| a.to_string())
                    .unwrap_or_default()
            };
            vec![
                class.to_string(),
                model.precision_language.precision[class].to_string(),
                model.precision_vision.precision[class].to_string(),
                acc(&summary.language),
                acc(&summary.vision),
                acc(&summary.fused),
            ]
        })
        .collect();
    out.csv(
        "fuse-per-class.csv",
        &[
            "class",
            "precision_language",
            "precision_vision",
            "accuracy_language",
            "accuracy_vision",
            "accuracy_fused",
        ],
        &rows,
    )?;

    let mut table_rows = vec![vec![
        "top-1".to_string(),
        opt_pct(summary.language.top1),
        opt_pct(summary.vision.top1),
        opt_pct(summary.vision_eval_best_k.top1),
        opt_pct(summary.fused.top1),
    ]];
    if summary.fused.real.is_some() {
        table_rows.push(vec![
            "ReaL".to_string(),
            opt_pct(summary.language.real),
            opt_pct(summary.vision.real),
            opt_pct(summary.vision_eval_best_k.real),
            opt_pct(summary.fused.real),
        ]);
    }
    let v_cv = format!("vision k={}", summary.cv_k);
    let v_best = format!("vision k={} (eval best)", summary.eval_best_k);
    let table = render_table(&["", "language", &v_cv, &v_best, "fused"], &table_rows);
    out.text("fuse.txt", &table)?;
    print!("{table}");
    Ok(0)
}
