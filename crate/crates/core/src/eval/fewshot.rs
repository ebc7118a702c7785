//! Few-shot k-NN: repeated draws of `m` training images per class as the
//! reference set.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::stats::ci_95;
use crate::eval::GroundTruth;
use crate::knn::{self, check_ref_labels, KnnConfig, Selection};
use crate::store::{EmbeddingStore, LabelSet};

/// Reference set sizes of the default schedule.
pub const DEFAULT_M_GRID: [usize; 8] = [1, 5, 10, 20, 50, 100, 250, 500];

/// Trials at `m` are `trial_budget / m` (at least one); a budget of 2500
/// gives 2500 draws at m = 1 down to 5 at m = 500.
pub const DEFAULT_TRIAL_BUDGET: usize = 2500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    pub m_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub trial_budget: usize,
    /// Same trial count for every m, overriding the budget.
    pub trials: Option<usize>,
    pub seed: u64,
}

impl FewShotConfig {
    pub fn new(m_grid: Vec<usize>, k_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            m_grid,
            k_grid,
            trial_budget: DEFAULT_TRIAL_BUDGET,
            trials: None,
            seed,
        }
    }

    pub fn trials_for(&self, m: usize) -> usize {
        self.trials
            .unwrap_or_else(|| self.trial_budget / m.max(1))
            .max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotCell {
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    /// Zero for a single trial.
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotTable {
    pub m_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    /// Only cells with `k <= m`, in (m, k) grid order.
    pub cells: Vec<FewShotCell>,
}

impl FewShotTable {
    pub fn get(&self, m: usize, k: usize) -> Option<&FewShotCell> {
        self.cells.iter().find(|c| c.m == m && c.k == k)
    }
}

/// Training rows of one draw: `min(m, class size)` members per class, as an
/// ascending row list. Trial `t` uses a generator seeded with `seed + t` on
/// stream `m`.
pub fn draw_reference_rows(members: &[Vec<u32>], m: usize, seed: u64, trial: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    rng.set_stream(m as u64);
    let mut rows = Vec::new();
    for class in members {
        let take = m.min(class.len());
        rows.extend(
            index::sample(&mut rng, class.len(), take)
                .into_iter()
                .map(|j| class[j]),
        );
    }
    rows.sort_unstable();
    rows
}

fn trial_accuracies(
    train: &EmbeddingStore,
    train_labels: &LabelSet,
    val: &EmbeddingStore,
    truth: &GroundTruth,
    rows: &[u32],
    ks: &[usize],
) -> Result<Vec<f64>> {
    let k_max = *ks.iter().max().expect("non-empty");
    let nl = knn::search(
        Selection::all(val.rows()),
        Selection::subset(train.rows(), rows),
        &KnnConfig::new(k_max),
        &|_| None,
    )?;
    Ok(ks
        .iter()
        .map(|&k| {
            let correct = nl
                .iter()
                .enumerate()
                .filter(|(i, row)| truth.labels().contains(*i, knn::vote(row, train_labels, k)))
                .count();
            correct as f64 / val.n().max(1) as f64
        })
        .collect())
}

/// Mean validation accuracy and 95% interval for every (m, k) with
/// `k <= m`. Trials run in parallel; each is seeded independently.
pub fn few_shot_eval(
    train: &EmbeddingStore,
    train_labels: &LabelSet,
    val: &EmbeddingStore,
    truth: &GroundTruth,
    cfg: &FewShotConfig,
) -> Result<FewShotTable> {
    knn::check_grid(&cfg.k_grid)?;
    check_ref_labels(train, train_labels)?;
    truth.check_store(val)?;
    if cfg.m_grid.is_empty() || cfg.m_grid.contains(&0) {
        return Err(Error::arg("m grid must be non-empty with every m >= 1"));
    }
    let members = train_labels.members_by_class();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(c as u32));
    }
    let mut cells = Vec::new();
    for &m in &cfg.m_grid {
        let refs: usize = members.iter().map(|c| m.min(c.len())).sum();
        let ks: Vec<usize> = cfg
            .k_grid
            .iter()
            .copied()
            .filter(|&k| k <= m && k <= refs)
            .collect();
        if ks.is_empty() {
            continue;
        }
        let trials = cfg.trials_for(m);
        let acc: Vec<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let rows = draw_reference_rows(&members, m, cfg.seed, t);
                trial_accuracies(train, train_labels, val, truth, &rows, &ks)
            })
            .collect::<Result<_>>()?;
        for (j, &k) in ks.iter().enumerate() {
            let per_trial: Vec<f64> = acc.iter().map(|a| a[j]).collect();
            let (mean, half_width) = if trials == 1 {
                (per_trial[0], 0.0)
            } else {
                let ci = ci_95(&per_trial)?;
                (ci.mean, ci.half_width)
            };
            cells.push(FewShotCell {
                m,
                k,
                trials,
                mean,
                half_width,
            });
        }
    }
    Ok(FewShotTable {
        m_grid: cfg.m_grid.clone(),
        k_grid: cfg.k_grid.clone(),
        cells,
    })
}
