use std::collections::BTreeMap;

use serde::Serialize;

use embclass::eval::{few_shot_eval, top1_accuracy, FewShotConfig, FewShotTable};
use embclass::knn::PairingPolicy;
use embclass::classify_knn;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{ensure_inputs, load_images, pct, render_table, Outputs};

#[derive(Debug, Serialize)]
pub struct AllImages {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct FewShotReport {
    pub table: FewShotTable,
    pub trial_budget: usize,
    pub seed: u64,
    /// Same k grid against the whole training split.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub all_images: Vec<AllImages>,
    pub provenance: BTreeMap<String, String>,
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_inputs(cfg)?;
    let train = load_images(&cfg.data.train, "data.train")?;
    let eval = load_images(&cfg.data.eval, "data.eval")?;
    let truth = eval.truth()?;
    let fs = &cfg.fewshot;
    let few = FewShotConfig {
        m_grid: fs.m_grid.clone(),
        k_grid: fs.k_grid.clone(),
        trial_budget: fs.trial_budget,
        trials: fs.trials,
        seed: cfg.seed,
    };
    let table = few_shot_eval(&train.store, &train.labels, &eval.store, &truth, &few)?;
    let mut all_images = Vec::new();
    if fs.all_images {
        for &k in fs.k_grid.iter().filter(|&&k| k <= train.store.n()) {
            let p = classify_knn(
                &eval.store,
                &train.store,
                &train.labels,
                k,
                &PairingPolicy::include_all(),
            )?;
            all_images.push(AllImages {
                k,
                accuracy: top1_accuracy(&p, &truth)?,
            });
        }
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("train_sha256".to_string(), train.sha256().to_string());
    provenance.insert("eval_sha256".to_string(), eval.sha256().to_string());
    let report = FewShotReport {
        table,
        trial_budget: fs.trial_budget,
        seed: cfg.seed,
        all_images,
        provenance,
    };

    let mut out = Outputs::create(cfg)?;
    out.json("fewshot.json", &report)?;
    let mut rows: Vec<Vec<String>> = report
        .table
        .cells
        .iter()
        .map(|c| {
            vec![
                c.m.to_string(),
                c.k.to_string(),
                c.trials.to_string(),
                c.mean.to_string(),
                c.half_width.to_string(),
            ]
        })
        .collect();
    rows.extend(report.all_images.iter().map(|a| {
        vec!["all".into(), a.k.to_string(), "1".into(), a.accuracy.to_string(), "0".into()]
    }));
    out.csv("fewshot.csv", &["m", "k", "trials", "mean", "half_width"], &rows)?;

    let t = &report.table;
    let mut header: Vec<String> = vec!["k".into()];
    header.extend(t.m_grid.iter().map(|&m| format!("{m} ({}x)", few.trials_for(m))));
    if !report.all_images.is_empty() {
        header.push("all images".into());
    }
    let table_rows: Vec<Vec<String>> = t
        .k_grid
        .iter()
        .map(|&k| {
            let mut row = vec![k.to_string()];
            for &m in &t.m_grid {
                row.push(match t.get(m, k) {
                    Some(c) => format!("{} ±{}", pct(c.mean), pct(c.half_width)),
                    None => "-".into(),
                });
            }
            if !report.all_images.is_empty() {
                row.push(
                    report
                        .all_images
                        .iter()
                        .find(|a| a.k == k)
                        .map(|a| pct(a.accuracy))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let text = render_table(&header, &table_rows);
    out.text("fewshot.txt", &text)?;
    print!("{text}");
    Ok(0)
}
