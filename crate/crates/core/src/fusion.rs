//! Precision-based fusion of a language and a vision classifier.
//!
//! Training estimates the per-class precision of both classifiers on the
//! training set (out-of-fold k-NN predictions for vision, zero-shot
//! predictions for language). At inference each image takes the language
//! prediction only when that class's language precision is strictly higher
//! than the vision precision of the vision prediction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::knn::{self, check_grid, check_ref_labels, KnnConfig, Selection};
use crate::predictions::{check_aligned, PredictionSet};
use crate::store::{EmbeddingStore, LabelSet, PromptBank};
use crate::zeroshot::{build_prototypes, classify_zeroshot, TemplateSelection};

/// Per-class true/false positive counts of one classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionTable {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    /// `tp / (tp + fp)`, or 0 where the class was never predicted.
    pub precision: Vec<f64>,
    /// False where the class was never predicted.
    pub defined: Vec<bool>,
}

impl PrecisionTable {
    pub fn from_counts(tp: Vec<u64>, fp: Vec<u64>) -> Self {
        let (precision, defined) = tp
            .iter()
            .zip(&fp)
            .map(|(&t, &f)| {
                if t + f == 0 {
                    (0.0, false)
                } else {
                    (t as f64 / (t + f) as f64, true)
                }
            })
            .unzip();
        Self {
            tp,
            fp,
            precision,
            defined,
        }
    }

    /// Table with the given precision values and no counts, for tests and
    /// what-if analysis.
    pub fn from_values(precision: Vec<f64>) -> Self {
        let n = precision.len();
        Self {
            tp: vec![0; n],
            fp: vec![0; n],
            defined: vec![true; n],
            precision,
        }
    }

    pub fn class_count(&self) -> usize {
        self.precision.len()
    }

    pub fn get(&self, class: u32) -> f64 {
        self.precision[class as usize]
    }
}

/// Counts a prediction as a true positive when the class is in the sample's
/// label set.
pub fn per_class_precision(preds: &PredictionSet, truth: &GroundTruth) -> Result<PrecisionTable> {
    preds.check_aligned(truth.sample_ids())?;
    let c = truth.class_count().max(preds.class_count()) as usize;
    let mut tp = vec![0u64; c];
    let mut fp = vec![0u64; c];
    for (i, &p) in preds.classes().iter().enumerate() {
        if truth.labels().contains(i, p) {
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
        }
    }
    Ok(PrecisionTable::from_counts(tp, fp))
}

/// Output of [`select_k_cv`].
#[derive(Clone, Debug)]
pub struct CvResult {
    pub best_k: usize,
    pub ks: Vec<usize>,
    /// Mean over folds of the held-out accuracy, per k.
    pub accuracy: Vec<f64>,
    /// `fold_accuracy[f][j]` is fold `f`'s accuracy at `ks[j]`.
    pub fold_accuracy: Vec<Vec<f64>>,
    /// Out-of-fold prediction of every training sample at `best_k`.
    pub out_of_fold: PredictionSet,
    /// Fold index of every training sample.
    pub folds: Vec<u32>,
}

/// Stratified fold assignment: each class's members are shuffled with one
/// seeded stream (classes in id order), then dealt round-robin with a
/// counter that carries over between classes.
pub fn assign_folds(labels: &LabelSet, folds: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0u32; labels.len()];
    let mut next = 0usize;
    for mut members in labels.members_by_class() {
        members.shuffle(&mut rng);
        for m in members {
            out[m as usize] = (next % folds) as u32;
            next += 1;
        }
    }
    out
}

/// Pick k by `folds`-fold cross-validation on the training set. Ties in
/// mean accuracy go to the smaller k.
pub fn select_k_cv(
    train: &EmbeddingStore,
    labels: &LabelSet,
    k_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if folds < 2 {
        return Err(Error::arg("cross-validation needs at least 2 folds"));
    }
    let k_max = check_grid(k_grid)?;
    check_ref_labels(train, labels)?;
    let assignment = assign_folds(labels, folds, seed);
    let mut ks = k_grid.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let mut oof = vec![vec![0u32; train.n()]; ks.len()];
    let mut fold_accuracy = Vec::with_capacity(folds);
    for f in 0..folds as u32 {
        let (held, refs): (Vec<u32>, Vec<u32>) =
            (0..train.n() as u32).partition(|&i| assignment[i as usize] == f);
        if held.is_empty() {
            continue;
        }
        if k_max > refs.len() {
            return Err(Error::KTooLarge {
                k: k_max,
                available: refs.len(),
            });
        }
        let nl = knn::search(
            Selection::subset(train.rows(), &held),
            Selection::subset(train.rows(), &refs),
            &KnnConfig::new(k_max),
            &|_| None,
        )?;
        let mut acc = Vec::with_capacity(ks.len());
        for (j, &k) in ks.iter().enumerate() {
            let mut correct = 0usize;
            for (q, row) in nl.iter().enumerate() {
                let i = held[q] as usize;
                let p = knn::vote(row, labels, k);
                oof[j][i] = p;
                correct += usize::from(labels.contains(i, p));
            }
            acc.push(correct as f64 / held.len() as f64);
        }
        fold_accuracy.push(acc);
    }
    let accuracy: Vec<f64> = (0..ks.len())
        .map(|j| fold_accuracy.iter().map(|a| a[j]).sum::<f64>() / fold_accuracy.len() as f64)
        .collect();
    let mut best = 0;
    for j in 1..ks.len() {
        if accuracy[j] > accuracy[best] {
            best = j;
        }
    }
    let best_k = ks[best];
    let out_of_fold = PredictionSet::new(
        train.sample_ids().to_vec(),
        std::mem::take(&mut oof[best]),
        labels.class_count(),
        format!("knn k={best_k} out-of-fold"),
    )?;
    Ok(CvResult {
        best_k,
        ks,
        accuracy,
        fold_accuracy,
        out_of_fold,
        folds: assignment,
    })
}

/// Trained fusion: both precision tables plus how they were obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub precision_language: PrecisionTable,
    pub precision_vision: PrecisionTable,
    pub chosen_k: usize,
    pub k_grid: Vec<usize>,
    pub cv_accuracy: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub templates: String,
    pub name_set: Option<String>,
    pub language_protocol: String,
    pub vision_protocol: String,
    pub train_sha256: String,
    pub bank_sha256: String,
}

impl FusionModel {
    /// Model built from bare precision tables.
    pub fn from_tables(language: PrecisionTable, vision: PrecisionTable, chosen_k: usize) -> Self {
        Self {
            precision_language: language,
            precision_vision: vision,
            chosen_k,
            k_grid: vec![chosen_k],
            cv_accuracy: Vec::new(),
            folds: 0,
            seed: 0,
            templates: String::new(),
            name_set: None,
            language_protocol: String::new(),
            vision_protocol: String::new(),
            train_sha256: String::new(),
            bank_sha256: String::new(),
        }
    }

    pub fn class_count(&self) -> usize {
        self.precision_language.class_count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|source| Error::Manifest {
            path: path.to_path_buf(),
            source,
        })?;
        if model.precision_vision.class_count() != model.class_count() {
            return Err(Error::arg("fusion model tables differ in class count"));
        }
        Ok(model)
    }
}

/// Fit both precision tables on the training set.
pub fn train_fusion(
    train: &EmbeddingStore,
    labels: &LabelSet,
    bank: &PromptBank,
    selection: &TemplateSelection,
    k_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<FusionModel> {
    if bank.d() != train.d() {
        return Err(Error::DimensionMismatch {
            left: train.d(),
            right: bank.d(),
        });
    }
    if bank.class_count() != labels.class_count() as usize {
        return Err(Error::arg(format!(
            "bank has {} classes, labels {}",
            bank.class_count(),
            labels.class_count()
        )));
    }
    let truth = GroundTruth::new(train.sample_ids().to_vec(), labels.clone())?;
    let cv = select_k_cv(train, labels, k_grid, folds, seed)?;
    let precision_vision = per_class_precision(&cv.out_of_fold, &truth)?;
    let protos = build_prototypes(bank, selection, true)?;
    let language = classify_zeroshot(train, &protos)?;
    let precision_language = per_class_precision(&language, &truth)?;
    Ok(FusionModel {
        precision_language,
        precision_vision,
        chosen_k: cv.best_k,
        k_grid: cv.ks,
        cv_accuracy: cv.accuracy,
        folds,
        seed,
        templates: selection.to_string(),
        name_set: bank.name_set().map(|n| n.to_string()),
        language_protocol: "zero-shot on the full training set".into(),
        vision_protocol: format!("{folds}-fold out-of-fold k-NN"),
        train_sha256: train.data_sha256(),
        bank_sha256: bank.store().data_sha256(),
    })
}

/// Language prediction iff its precision strictly beats the vision
/// prediction's; otherwise the vision prediction.
pub fn fuse_predict(p_l: u32, p_v: u32, model: &FusionModel) -> u32 {
    if model.precision_language.get(p_l) > model.precision_vision.get(p_v) {
        p_l
    } else {
        p_v
    }
}

pub fn fuse_predictions(
    language: &PredictionSet,
    vision: &PredictionSet,
    model: &FusionModel,
) -> Result<PredictionSet> {
    check_aligned(language.sample_ids(), vision.sample_ids())?;
    let c = model.class_count() as u32;
    if language.class_count() > c || vision.class_count() > c {
        return Err(Error::arg("predictions exceed the fusion model's class count"));
    }
    let classes = language
        .classes()
        .iter()
        .zip(vision.classes())
        .map(|(&l, &v)| fuse_predict(l, v, model))
        .collect();
    PredictionSet::new(language.sample_ids().to_vec(), classes, c, "fused")
}
