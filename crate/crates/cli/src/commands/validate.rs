use std::path::Path;

use serde::Serialize;

use embclass::{load_store, Error, PredictionSet, PromptBank};

use crate::config::RunConfig;
use crate::error::{core_exit_code, CliError, EXIT_INVALID, EXIT_OK};
use crate::io::{ensure_exists, ensure_inputs, Outputs};

#[derive(Debug, Default, Serialize)]
pub struct ValidationReport {
    pub files: Vec<FileCheck>,
    pub problems: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FileCheck {
    pub key: String,
    pub path: String,
    pub diagnostics: Vec<String>,
}

struct Shape {
    d: usize,
    classes: u32,
    ids: Vec<String>,
}

/// A core error that means the file was read but is bad becomes diagnostics;
/// unreadable files stay errors.
fn diagnostics_of(e: Error) -> Result<Vec<String>, CliError> {
    if core_exit_code(&e) != EXIT_INVALID {
        return Err(e.into());
    }
    Ok(match e {
        Error::Invalid(diags) => diags.iter().map(ToString::to_string).collect(),
        other => vec![other.to_string()],
    })
}

fn check_images(path: &Path, key: &str, report: &mut ValidationReport) -> Result<Option<Shape>, CliError> {
    let (diagnostics, shape) = match load_store(path) {
        Ok((store, labels, _)) => (
            Vec::new(),
            Some(Shape {
                d: store.d(),
                classes: labels.class_count(),
                ids: store.sample_ids().to_vec(),
            }),
        ),
        Err(e) => (diagnostics_of(e)?, None),
    };
    report.files.push(FileCheck {
        key: key.to_string(),
        path: path.display().to_string(),
        diagnostics,
    });
    Ok(shape)
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_inputs(cfg)?;
    let mut report = ValidationReport::default();
    let mut shapes = Vec::new();
    for (key, path) in [("data.train", &cfg.data.train), ("data.eval", &cfg.data.eval)] {
        if let Some(p) = path {
            if let Some(shape) = check_images(p, key, &mut report)? {
                shapes.push((key, shape));
            }
        }
    }
    let mut bank_shape = None;
    if let Some(p) = &cfg.data.bank {
        let diagnostics = match PromptBank::load(p) {
            Ok(bank) => {
                bank_shape = Some((bank.d(), bank.class_count() as u32));
                Vec::new()
            }
            Err(e) => diagnostics_of(e)?,
        };
        report.files.push(FileCheck {
            key: "data.bank".into(),
            path: p.display().to_string(),
            diagnostics,
        });
    }
    if cfg.data.train.is_none() && cfg.data.eval.is_none() && cfg.data.bank.is_none() {
        return Err(CliError::Config("nothing to validate: no data paths set".into()));
    }

    if let [(a, first), (b, second)] = &shapes[..] {
        if first.d != second.d {
            report.problems.push(format!("{a} has d = {}, {b} has d = {}", first.d, second.d));
        }
        if first.classes != second.classes {
            report.problems.push(format!(
                "{a} has {} classes, {b} has {}",
                first.classes, second.classes
            ));
        }
    }
    if let Some((d, classes)) = bank_shape {
        for (key, s) in &shapes {
            if s.d != d {
                report.problems.push(format!("data.bank has d = {d}, {key} has d = {}", s.d));
            }
            if s.classes != classes {
                report.problems.push(format!(
                    "data.bank has {classes} classes, {key} has {}",
                    s.classes
                ));
            }
        }
    }
    if let Some(p) = &cfg.data.predictions {
        ensure_exists(p)?;
        if let Some((_, eval)) = shapes.iter().find(|(k, _)| *k == "data.eval") {
            let checked = PredictionSet::read_csv(p, eval.classes, "import")
                .and_then(|preds| preds.align_to(&eval.ids).map(|_| ()));
            let diagnostics = match checked {
                Ok(()) => Vec::new(),
                Err(Error::Predictions { message, .. }) => vec![message],
                Err(e) => diagnostics_of(e)?,
            };
            report.files.push(FileCheck {
                key: "data.predictions".into(),
                path: p.display().to_string(),
                diagnostics,
            });
        }
    }

    let mut bad = !report.problems.is_empty();
    for f in &report.files {
        if f.diagnostics.is_empty() {
            println!("ok      {} ({})", f.key, f.path);
        } else {
            bad = true;
            println!("invalid {} ({})", f.key, f.path);
            for d in &f.diagnostics {
                println!("  {d}");
            }
        }
    }
    for p in &report.problems {
        println!("invalid {p}");
    }
    let mut out = Outputs::create(cfg)?;
    out.json("validate.json", &report)?;
    Ok(if bad { EXIT_INVALID } else { EXIT_OK })
}
