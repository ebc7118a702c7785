use std::collections::BTreeMap;

use serde::Serialize;

use embclass::eval::{accuracy_shift, per_class_accuracy, ClassShift};
use embclass::knn::{exclude_self, sweep_k, KSweep, PairingPolicy};
use embclass::EmbeddingStore;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{ensure_inputs, load_images, pct, render_table, Images, Outputs};

#[derive(Debug, Serialize)]
pub struct KAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct ClassBestK {
    pub class: u32,
    pub best_k: usize,
    pub accuracy_best_k: f64,
    pub accuracy_global_k: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    /// Eval split classified against the training split.
    pub validation: Vec<KAccuracy>,
    pub best_k: usize,
    /// Training split classified against the eval split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<Vec<KAccuracy>>,
    pub per_class_best_k: Vec<ClassBestK>,
    /// Per-class accuracy change from the training split to the eval split
    /// at `best_k`: largest increases first, then largest decreases.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub shift: Vec<ClassShift>,
    pub provenance: BTreeMap<String, String>,
}

fn policy(q: &EmbeddingStore, r: &EmbeddingStore, on: bool) -> PairingPolicy {
    if on {
        exclude_self(q, r)
    } else {
        PairingPolicy::include_all()
    }
}

fn run_sweep(q: &Images, r: &Images, grid: &[usize], self_exclude: bool) -> Result<KSweep, CliError> {
    Ok(sweep_k(
        &q.store,
        &r.store,
        &r.labels,
        grid,
        &q.labels,
        &policy(&q.store, &r.store, self_exclude),
    )?)
}

fn curve(s: &KSweep) -> Vec<KAccuracy> {
    s.ks.iter()
        .zip(&s.accuracy)
        .map(|(&k, &accuracy)| KAccuracy { k, accuracy })
        .collect()
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_inputs(cfg)?;
    let train = load_images(&cfg.data.train, "data.train")?;
    let eval = load_images(&cfg.data.eval, "data.eval")?;
    let sc = &cfg.sweep;
    let val = run_sweep(&eval, &train, &sc.k_grid, sc.self_exclude)?;
    let (best_k, _) = val.best().expect("non-empty grid");
    let best_at = val.ks.iter().position(|&k| k == best_k).expect("k in grid");

    let eval_truth = eval.truth()?;
    let per_k: Vec<Vec<Option<f64>>> = val
        .predictions
        .iter()
        .map(|p| per_class_accuracy(p, &eval_truth))
        .collect::<Result<_, _>>()?;
    let mut per_class_best_k = Vec::new();
    for class in 0..per_k[best_at].len() {
        let Some(global) = per_k[best_at][class] else {
            continue;
        };
        // ties go to the smaller k, as for the global choice
        let mut best = (val.ks[0], per_k[0][class].unwrap_or(0.0));
        for (j, &k) in val.ks.iter().enumerate().skip(1) {
            let a = per_k[j][class].unwrap_or(0.0);
            if a > best.1 || (a == best.1 && k < best.0) {
                best = (k, a);
            }
        }
        per_class_best_k.push(ClassBestK {
            class: class as u32,
            best_k: best.0,
            accuracy_best_k: best.1,
            accuracy_global_k: global,
        });
    }

    let mut training = None;
    let mut shift = Vec::new();
    let mut shift_rows = Vec::new();
    if sc.swapped {
        let tr = run_sweep(&train, &eval, &sc.k_grid, sc.self_exclude)?;
        let train_per_class = per_class_accuracy(&tr.predictions[best_at], &train.truth()?)?;
        let val_per_class = &per_k[best_at];
        shift = accuracy_shift(val_per_class, &train_per_class, sc.shift_top_n)?;
        shift_rows = shift
            .iter()
            .map(|s| {
                let c = s.class as usize;
                vec![
                    s.class.to_string(),
                    train_per_class[c].map(|a| a.to_string()).unwrap_or_default(),
                    val_per_class[c].map(|a| a.to_string()).unwrap_or_default(),
                    s.delta.to_string(),
                ]
            })
            .collect();
        training = Some(curve(&tr));
    }

    let mut provenance = BTreeMap::new();
    provenance.insert("train_sha256".to_string(), train.sha256().to_string());
    provenance.insert("eval_sha256".to_string(), eval.sha256().to_string());
    provenance.insert("self_exclude".to_string(), sc.self_exclude.to_string());
    let report = SweepReport {
        validation: curve(&val),
        best_k,
        training,
        per_class_best_k,
        shift,
        provenance,
    };

    let mut out = Outputs::create(cfg)?;
    out.json("sweep.json", &report)?;
    let mut rows: Vec<Vec<String>> = report
        .validation
        .iter()
        .map(|p| vec!["validation".into(), p.k.to_string(), p.accuracy.to_string()])
        .collect();
    for p in report.training.iter().flatten() {
        rows.push(vec!["training".into(), p.k.to_string(), p.accuracy.to_string()]);
    }
    out.csv("sweep.csv", &["split", "k", "accuracy"], &rows)?;
    let best_rows: Vec<Vec<String>> = report
        .per_class_best_k
        .iter()
        .map(|b| {
            vec![
                b.class.to_string(),
                b.best_k.to_string(),
                b.accuracy_best_k.to_string(),
                best_k.to_string(),
                b.accuracy_global_k.to_string(),
                (b.accuracy_best_k - b.accuracy_global_k).to_string(),
            ]
        })
        .collect();
    out.csv(
        "best-k.csv",
        &["class", "best_k", "accuracy_best_k", "global_k", "accuracy_global_k", "improvement"],
        &best_rows,
    )?;
    if sc.swapped {
        out.csv(
            "shift.csv",
            &["class", "accuracy_training", "accuracy_validation", "delta"],
            &shift_rows,
        )?;
    }

    let table_rows: Vec<Vec<String>> = report
        .validation
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let mut row = vec![p.k.to_string(), pct(p.accuracy)];
            if let Some(t) = &report.training {
                row.push(pct(t[j].accuracy));
            }
            row
        })
        .collect();
    let header: &[&str] = if report.training.is_some() {
        &["k", "validation", "training"]
    } else {
        &["k", "validation"]
    };
    let text = format!("{}best k: {best_k}\n", render_table(header, &table_rows));
    out.text("sweep.txt", &text)?;
    print!("{text}");
    Ok(0)
}
