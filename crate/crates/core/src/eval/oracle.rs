//! Oracle upper bounds over a family of classifiers. Variants are chosen on
//! the same samples they are scored on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::predictions::{PredictionSet, VariantFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleLevel {
    /// One variant per ground-truth class.
    Class,
    /// One variant per sample.
    Image,
}

impl fmt::Display for OracleLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleLevel::Class => "class",
            OracleLevel::Image => "image",
        })
    }
}

impl FromStr for OracleLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(OracleLevel::Class),
            "image" => Ok(OracleLevel::Image),
            _ => Err(Error::arg(format!("unknown oracle level {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassOracle {
    /// Family index chosen for each class; 0 for classes without samples.
    pub chosen: Vec<usize>,
    pub accuracy: f64,
    pub predictions: PredictionSet,
}

fn check_family(family: &VariantFamily, truth: &GroundTruth) -> Result<()> {
    family.members()[0].check_aligned(truth.sample_ids())
}

/// Per class (grouped by primary label), the member with the most correct
/// predictions on that class; ties go to the earlier member.
pub fn class_level_oracle(family: &VariantFamily, truth: &GroundTruth) -> Result<ClassOracle> {
    check_family(family, truth)?;
    let labels = truth.labels();
    let c = truth.class_count().max(family.class_count()) as usize;
    let members = family.members();
    // correct[m][class]
    let mut correct = vec![vec![0usize; c]; members.len()];
    for (m, p) in members.iter().enumerate() {
        for (i, &pred) in p.classes().iter().enumerate() {
            if labels.contains(i, pred) {
                correct[m][labels.primary(i) as usize] += 1;
            }
        }
    }
    let chosen: Vec<usize> = (0..c)
        .map(|class| {
            let mut best = 0;
            for m in 1..members.len() {
                if correct[m][class] > correct[best][class] {
                    best = m;
                }
            }
            best
        })
        .collect();
    let classes: Vec<u32> = (0..truth.len())
        .map(|i| members[chosen[labels.primary(i) as usize]].classes()[i])
        .collect();
    let hits: usize = (0..c).map(|class| correct[chosen[class]][class]).sum();
    Ok(ClassOracle {
        chosen,
        accuracy: hits as f64 / truth.len().max(1) as f64,
        predictions: PredictionSet::new(
            truth.sample_ids().to_vec(),
            classes,
            c as u32,
            format!("class oracle over {}", family.name()),
        )?,
    })
}

/// Fraction of samples for which at least one member is correct.
pub fn image_level_oracle(family: &VariantFamily, truth: &GroundTruth) -> Result<f64> {
    check_family(family, truth)?;
    let labels = truth.labels();
    let hits = (0..truth.len())
        .filter(|&i| {
            family
                .members()
                .iter()
                .any(|p| labels.contains(i, p.classes()[i]))
        })
        .count();
    Ok(hits as f64 / truth.len().max(1) as f64)
}

pub fn oracle(family: &VariantFamily, truth: &GroundTruth, level: OracleLevel) -> Result<f64> {
    match level {
        OracleLevel::Class => Ok(class_level_oracle(family, truth)?.accuracy),
        OracleLevel::Image => image_level_oracle(family, truth),
    }
}

/// Oracle over the union of a vision and a language family.
pub fn double_oracle(
    vision: &VariantFamily,
    language: &VariantFamily,
    truth: &GroundTruth,
    level: OracleLevel,
) -> Result<f64> {
    oracle(&vision.union(language)?, truth, level)
}
