use std::collections::BTreeMap;

use serde::Serialize;

use embclass::eval::{class_level_oracle, image_level_oracle, top1_accuracy, OracleLevel};
use embclass::knn::{sweep_k, PairingPolicy};
use embclass::zeroshot::per_template_predictions;
use embclass::{GroundTruth, PredictionSet, VariantFamily};

use crate::config::{FamilyKind, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_exists, ensure_inputs, load_bank, load_images, pct, render_table, Outputs};

#[derive(Debug, Serialize)]
pub struct Member {
    pub variant: String,
    pub top1: f64,
}

#[derive(Debug, Serialize)]
pub struct FamilyOracle {
    pub family: String,
    pub members: Vec<Member>,
    pub best_member: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_level: Option<f64>,
    /// Member index chosen for each class by the class-level oracle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_level: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub families: Vec<FamilyOracle>,
    pub provenance: BTreeMap<String, String>,
}

pub fn family_oracle(
    family: &VariantFamily,
    truth: &GroundTruth,
    levels: &[OracleLevel],
) -> Result<FamilyOracle, CliError> {
    let members = family
        .members()
        .iter()
        .map(|p| {
            Ok(Member {
                variant: p.variant().to_string(),
                top1: top1_accuracy(p, truth)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let best_member = members.iter().map(|m| m.top1).fold(0.0, f64::max);
    let mut out = FamilyOracle {
        family: family.name().to_string(),
        members,
        best_member,
        class_level: None,
        chosen: None,
        image_level: None,
    };
    for level in levels {
        match level {
            OracleLevel::Class => {
                let o = class_level_oracle(family, truth)?;
                out.class_level = Some(o.accuracy);
                out.chosen = Some(o.chosen);
            }
            OracleLevel::Image => out.image_level = Some(image_level_oracle(family, truth)?),
        }
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_inputs(cfg)?;
    let eval = load_images(&cfg.data.eval, "data.eval")?;
    let truth = eval.truth()?;
    let levels = match cfg.oracle.level {
        Some(l) => vec![l],
        None => vec![OracleLevel::Class, OracleLevel::Image],
    };
    let mut provenance = BTreeMap::new();
    provenance.insert("eval_sha256".to_string(), eval.sha256().to_string());

    let kind = cfg.oracle.family;
    let mut families = Vec::new();
    let mut language = None;
    let mut vision = None;
    if matches!(kind, FamilyKind::Templates | FamilyKind::Double) {
        let bank = load_bank(cfg)?;
        provenance.insert("bank_sha256".to_string(), bank.store().data_sha256());
        let members = per_template_predictions(&eval.store, &bank)?;
        language = Some(VariantFamily::new("templates", members)?);
    }
    if matches!(kind, FamilyKind::Knn | FamilyKind::Double) {
        let train = load_images(&cfg.data.train, "data.train")?;
        provenance.insert("train_sha256".to_string(), train.sha256().to_string());
        let sweep = sweep_k(
            &eval.store,
            &train.store,
            &train.labels,
            &cfg.oracle.k_grid,
            &eval.labels,
            &PairingPolicy::include_all(),
        )?;
        vision = Some(VariantFamily::new("knn", sweep.predictions)?);
    }
    if kind == FamilyKind::Import {
        if cfg.oracle.imports.is_empty() {
            return Err(CliError::Config("oracle.imports lists no prediction files".into()));
        }
        let mut members = Vec::new();
        for path in &cfg.oracle.imports {
            ensure_exists(path)?;
            let name = path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            let p = PredictionSet::read_csv(path, eval.manifest.class_count, name)?;
            members.push(p.align_to(eval.store.sample_ids())?);
        }
        families.push(family_oracle(&VariantFamily::new("import", members)?, &truth, &levels)?);
    }
    if let Some(f) = &vision {
        families.push(family_oracle(f, &truth, &levels)?);
    }
    if let Some(f) = &language {
        families.push(family_oracle(f, &truth, &levels)?);
    }
    if let (Some(v), Some(l)) = (&vision, &language) {
        let union = VariantFamily::new("double", v.union(l)?.members().to_vec())?;
        families.push(family_oracle(&union, &truth, &levels)?);
    }

    let report = OracleReport {
        families,
        provenance,
    };
    let mut out = Outputs::create(cfg)?;
    out.json("oracle.json", &report)?;
    let mut csv_rows = Vec::new();
    let mut table_rows = Vec::new();
    for f in &report.families {
        csv_rows.push(vec![f.family.clone(), "best-member".into(), f.best_member.to_string()]);
        if let Some(a) = f.class_level {
            csv_rows.push(vec![f.family.clone(), "class".into(), a.to_string()]);
        }
        if let Some(a) = f.image_level {
            csv_rows.push(vec![f.family.clone(), "image".into(), a.to_string()]);
        }
        table_rows.push(vec![
            f.family.clone(),
            f.members.len().to_string(),
            pct(f.best_member),
            f.class_level.map(pct).unwrap_or_else(|| "-".into()),
            f.image_level.map(pct).unwrap_or_else(|| "-".into()),
        ]);
    }
    out.csv("oracle.csv", &["family", "level", "accuracy"], &csv_rows)?;
    let table = render_table(
        &["family", "members", "best member", "class oracle", "image oracle"],
        &table_rows,
    );
    out.text("oracle.txt", &table)?;
    print!("{table}");
    Ok(0)
}
