//! Accuracy metrics, oracles, few-shot evaluation and report assembly.

mod fewshot;
mod oracle;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use fewshot::{
    draw_reference_rows, few_shot_eval, FewShotCell, FewShotConfig, FewShotTable,
    DEFAULT_M_GRID, DEFAULT_TRIAL_BUDGET,
};
pub use oracle::{
    class_level_oracle, double_oracle, image_level_oracle, oracle, ClassOracle, OracleLevel,
};
pub use stats::{ci_95, Interval, CI_METHOD};

use crate::error::{Error, Result};
use crate::predictions::{check_aligned, PredictionSet};
use crate::store::{DatasetManifest, EmbeddingStore, LabelSet};

/// Label sets keyed by sample id, in evaluation order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    sample_ids: Vec<String>,
    labels: LabelSet,
}

impl GroundTruth {
    pub fn new(sample_ids: Vec<String>, labels: LabelSet) -> Result<Self> {
        if sample_ids.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: sample_ids.len(),
                actual: labels.len(),
            });
        }
        Ok(Self { sample_ids, labels })
    }

    pub fn from_store(store: &EmbeddingStore, labels: &LabelSet) -> Result<Self> {
        Self::new(store.sample_ids().to_vec(), labels.clone())
    }

    /// Multi-label truth of the cleaner subset described by a manifest.
    pub fn cleaner(store: &EmbeddingStore, manifest: &DatasetManifest) -> Result<Self> {
        let missing = || Error::arg("manifest has no cleaner mask and multi-label sets");
        let rows = manifest.cleaner_rows().ok_or_else(missing)?;
        let labels = manifest.cleaner_labels().ok_or_else(missing)?;
        let ids = rows
            .iter()
            .map(|&r| {
                store
                    .sample_ids()
                    .get(r as usize)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("cleaner mask names missing row {r}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, labels)
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn class_count(&self) -> u32 {
        self.labels.class_count()
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub(crate) fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        check_aligned(store.sample_ids(), &self.sample_ids)
    }
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Fraction of predictions equal to the sample's single label.
pub fn top1_accuracy(preds: &PredictionSet, truth: &GroundTruth) -> Result<f64> {
    preds.check_aligned(truth.sample_ids())?;
    let labels = truth.labels();
    if let Some(i) = (0..labels.len()).find(|&i| labels.get(i).len() != 1) {
        return Err(Error::MultiLabel(i));
    }
    let hits = (0..labels.len())
        .filter(|&i| labels.primary(i) == preds.classes()[i])
        .count();
    Ok(fraction(hits, labels.len()))
}

/// Fraction of predictions contained in the sample's label set.
pub fn real_accuracy(preds: &PredictionSet, truth: &GroundTruth) -> Result<f64> {
    preds.check_aligned(truth.sample_ids())?;
    let labels = truth.labels();
    if let Some(i) = (0..labels.len()).find(|&i| labels.get(i).is_empty()) {
        return Err(Error::arg(format!("sample {i} has no label set")));
    }
    let hits = (0..labels.len())
        .filter(|&i| labels.contains(i, preds.classes()[i]))
        .count();
    Ok(fraction(hits, labels.len()))
}

/// Per class, accuracy over the samples whose label set contains it;
/// `None` for classes without samples.
pub fn per_class_accuracy(preds: &PredictionSet, truth: &GroundTruth) -> Result<Vec<Option<f64>>> {
    preds.check_aligned(truth.sample_ids())?;
    let labels = truth.labels();
    let c = truth.class_count().max(preds.class_count()) as usize;
    let mut total = vec![0usize; c];
    let mut hits = vec![0usize; c];
    for i in 0..labels.len() {
        let ok = labels.contains(i, preds.classes()[i]);
        for &class in labels.get(i) {
            total[class as usize] += 1;
            hits[class as usize] += usize::from(ok);
        }
    }
    Ok(total
        .iter()
        .zip(&hits)
        .map(|(&t, &h)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

/// Unweighted mean over present classes.
pub fn mean_present(per_class: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassShift {
    pub class: u32,
    pub delta: f64,
}

/// The `top_n` largest increases of `a - b` (descending) followed by the
/// `top_n` largest decreases (most negative first). Classes absent from
/// either vector are skipped; ties go to the smaller class id.
pub fn accuracy_shift(a: &[Option<f64>], b: &[Option<f64>], top_n: usize) -> Result<Vec<ClassShift>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut deltas: Vec<ClassShift> = a
        .iter()
        .zip(b)
        .enumerate()
        .filter_map(|(c, (x, y))| {
            Some(ClassShift {
                class: c as u32,
                delta: (*x)? - (*y)?,
            })
        })
        .collect();
    deltas.sort_by(|p, q| q.delta.total_cmp(&p.delta).then(p.class.cmp(&q.class)));
    let up = top_n.min(deltas.len());
    let mut out: Vec<ClassShift> = deltas[..up].to_vec();
    let rest = &mut deltas[up..];
    rest.sort_by(|p, q| p.delta.total_cmp(&q.delta).then(p.class.cmp(&q.class)));
    out.extend(rest.iter().take(top_n));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub level: OracleLevel,
    pub variants: Vec<String>,
    pub accuracy: f64,
    /// Family index chosen per class, for class-level oracles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<Vec<usize>>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub mean: f64,
    pub half_width: f64,
    pub trials: usize,
    pub method: String,
}

/// Machine-readable evaluation of one prediction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub samples: usize,
    pub class_count: u32,
    /// Against single labels; absent when the truth is multi-label.
    pub top1: Option<f64>,
    /// Against multi-label sets, when available.
    pub real: Option<f64>,
    pub real_samples: Option<usize>,
    pub per_class: Vec<Option<f64>>,
    pub mean_per_class: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn evaluate(preds: &PredictionSet, truth: &GroundTruth) -> Result<Self> {
        let single = truth.labels().is_single_label();
        let per_class = per_class_accuracy(preds, truth)?;
        Ok(Self {
            variant: preds.variant().to_string(),
            samples: truth.len(),
            class_count: truth.class_count(),
            top1: if single {
                Some(top1_accuracy(preds, truth)?)
            } else {
                None
            },
            real: if single {
                None
            } else {
                Some(real_accuracy(preds, truth)?)
            },
            real_samples: (!single).then_some(truth.len()),
            mean_per_class: mean_present(&per_class),
            per_class,
            ci: None,
            oracle: None,
            provenance: BTreeMap::new(),
        })
    }

    /// Add ReaL accuracy on a (possibly smaller) multi-label subset.
    pub fn with_real(mut self, preds: &PredictionSet, multi: &GroundTruth) -> Result<Self> {
        let aligned = preds.align_to(multi.sample_ids())?;
        self.real = Some(real_accuracy(&aligned, multi)?);
        self.real_samples = Some(multi.len());
        Ok(self)
    }

    pub fn with_ci(mut self, ci: Interval) -> Self {
        self.ci = Some(CiSummary {
            mean: ci.mean,
            half_width: ci.half_width,
            trials: ci.trials,
            method: CI_METHOD.to_string(),
        });
        self
    }

    pub fn with_oracle(mut self, summary: OracleSummary) -> Self {
        self.oracle = Some(summary);
        self
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<String>) -> Self {
        self.provenance.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
