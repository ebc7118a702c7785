use embclass::knn::{exclude_self, PairingPolicy};
use embclass::zeroshot::prompt_space_knn_templates;
use embclass::{build_prototypes, classify_knn, classify_zeroshot, EvalReport, PredictionSet};

use crate::config::{Classifier, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_inputs, load_bank, load_images, render_table, required, Images, Outputs};

use super::{per_class_rows, report_row, REPORT_HEADER};

pub fn classifier_name(c: Classifier) -> &'static str {
    match c {
        Classifier::Knn => "knn",
        Classifier::Zeroshot => "zeroshot",
        Classifier::PromptKnn => "prompt-knn",
        Classifier::Import => "import",
    }
}

/// Score `preds` on the eval split, adding the cleaner-subset ReaL score
/// when the split carries one and the config asks for it.
pub fn evaluate(preds: &PredictionSet, eval: &Images, real: bool) -> Result<EvalReport, CliError> {
    let mut report = EvalReport::evaluate(preds, &eval.truth()?)?;
    if real {
        if let Some(multi) = eval.cleaner_truth()? {
            report = report.with_real(preds, &multi)?;
        }
    }
    Ok(report.with_provenance("eval_sha256", eval.sha256()))
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_inputs(cfg)?;
    let eval = load_images(&cfg.data.eval, "data.eval")?;
    let name = classifier_name(cfg.eval.classifier);
    let mut provenance: Vec<(&str, String)> = vec![("classifier", name.to_string())];
    let preds = match cfg.eval.classifier {
        Classifier::Knn => {
            let train = load_images(&cfg.data.train, "data.train")?;
            let policy = if cfg.eval.self_exclude {
                exclude_self(&eval.store, &train.store)
            } else {
                PairingPolicy::include_all()
            };
            provenance.push(("k", cfg.eval.k.to_string()));
            provenance.push(("self_exclude", cfg.eval.self_exclude.to_string()));
            provenance.push(("train_sha256", train.sha256().to_string()));
            classify_knn(&eval.store, &train.store, &train.labels, cfg.eval.k, &policy)?
        }
        Classifier::Zeroshot => {
            let bank = load_bank(cfg)?;
            let protos = build_prototypes(&bank, &cfg.templates()?, true)?;
            provenance.push(("templates", cfg.eval.templates.clone()));
            provenance.push(("bank_sha256", bank.store().data_sha256()));
            classify_zeroshot(&eval.store, &protos)?
        }
        Classifier::PromptKnn => {
            let bank = load_bank(cfg)?;
            let ids = cfg.templates()?.resolve(&bank)?;
            provenance.push(("k", cfg.eval.k.to_string()));
            provenance.push(("templates", cfg.eval.templates.clone()));
            provenance.push(("bank_sha256", bank.store().data_sha256()));
            prompt_space_knn_templates(&eval.store, &bank, &ids, cfg.eval.k)?
        }
        Classifier::Import => {
            let path = required(&cfg.data.predictions, "data.predictions")?;
            let file = path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            let preds = PredictionSet::read_csv(path, eval.manifest.class_count, format!("import {file}"))?;
            preds.align_to(eval.store.sample_ids())?
        }
    };
    let mut report = evaluate(&preds, &eval, cfg.eval.real)?;
    for (k, v) in provenance {
        report = report.with_provenance(k, v);
    }

    let mut out = Outputs::create(cfg)?;
    out.text(&format!("eval-{name}.json"), &report.to_json())?;
    preds.write_csv(&out.path(&format!("predictions-{name}.csv")))?;
    out.csv(
        &format!("per-class-{name}.csv"),
        &["class", "accuracy"],
        &per_class_rows(&report.per_class),
    )?;
    let table = render_table(&REPORT_HEADER, &[report_row(&report)]);
    out.text(&format!("eval-{name}.txt"), &table)?;
    print!("{table}");
    Ok(0)
}
