//! Exact top-k cosine search and majority-vote classification.
//!
//! The scan runs an f32 matrix product over blocks of queries and reference
//! rows and keeps, per query, every reference whose approximate similarity
//! is within twice the worst-case rounding error of the running k-th best.
//! That candidate set provably contains the exact top k, which is then
//! selected with f64 accumulation and the `(similarity desc, index asc)`
//! order. Results therefore do not depend on blocking or thread count.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, FormatError, Result};
use crate::predictions::PredictionSet;
use crate::store::{read_container, write_container, EmbeddingStore, LabelSet, Role, Rows, Words};

/// k values swept by default.
pub const DEFAULT_K_GRID: [usize; 8] = [1, 3, 5, 7, 9, 11, 13, 51];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
    /// Queries per parallel work item.
    pub query_batch: usize,
    /// Reference rows per matrix-product block.
    pub ref_batch: usize,
}

impl KnnConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            query_batch: 512,
            ref_batch: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if self.query_batch == 0 || self.ref_batch == 0 {
            return Err(Error::arg("batch sizes must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub similarity: f32,
}

/// `k` neighbors per query, most similar first, ties by ascending index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList {
    k: usize,
    entries: Vec<Neighbor>,
}

impl NeighborList {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of queries.
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.entries.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn query(&self, q: usize) -> &[Neighbor] {
        &self.entries[q * self.k..(q + 1) * self.k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Neighbor]> + '_ {
        self.entries.chunks(self.k.max(1))
    }

    /// Persist in the store container (role `neighbors`, each row holding
    /// k indices followed by k similarity bit patterns).
    pub fn save(&self, path: &Path, query_ids: &[String]) -> Result<()> {
        if query_ids.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: query_ids.len(),
            });
        }
        let mut words = Vec::with_capacity(self.entries.len() * 2);
        for row in self.iter() {
            words.extend(row.iter().map(|n| n.index));
            words.extend(row.iter().map(|n| n.similarity.to_bits()));
        }
        write_container(
            path,
            Role::Neighbors,
            2 * self.k,
            Words::U32(&words),
            None,
            query_ids,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let c = read_container(path)?;
        if c.role != Role::Neighbors {
            return Err(FormatError::WrongRole {
                expected: "neighbors",
                found: c.role.as_str(),
            }
            .into());
        }
        let k = c.d / 2;
        let mut entries = Vec::with_capacity(c.ids.len() * k);
        for row in c.words.chunks(c.d.max(1)) {
            let (idx, sims) = row.split_at(k);
            entries.extend(idx.iter().zip(sims).map(|(&index, &s)| Neighbor {
                index,
                similarity: f32::from_bits(s),
            }));
        }
        Ok((Self { k, entries }, c.ids))
    }
}

/// Reference rows a query may not be paired with.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairingPolicy {
    excluded: Option<Vec<Option<u32>>>,
}

impl PairingPolicy {
    /// Every reference row is eligible for every query.
    pub fn include_all() -> Self {
        Self { excluded: None }
    }

    pub fn excluded_for(&self, query: usize) -> Option<u32> {
        self.excluded.as_ref().and_then(|e| e.get(query).copied().flatten())
    }

    pub fn is_noop(&self) -> bool {
        self.excluded
            .as_ref()
            .map_or(true, |e| e.iter().all(Option::is_none))
    }
}

/// Policy that never returns a reference row whose sample id equals the
/// query's. A no-op when the stores share no ids.
pub fn exclude_self(queries: &EmbeddingStore, refs: &EmbeddingStore) -> PairingPolicy {
    let index: HashMap<&str, u32> = refs
        .sample_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i as u32))
        .collect();
    let excluded: Vec<Option<u32>> = queries
        .sample_ids()
        .iter()
        .map(|id| index.get(id.as_str()).copied())
        .collect();
    PairingPolicy {
        excluded: Some(excluded),
    }
}

/// Rows of a matrix, optionally restricted to an ascending list of source rows.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Selection<'a> {
    rows: Rows<'a>,
    subset: Option<&'a [u32]>,
}

impl<'a> Selection<'a> {
    pub fn all(rows: Rows<'a>) -> Self {
        Self { rows, subset: None }
    }

    pub fn subset(rows: Rows<'a>, subset: &'a [u32]) -> Self {
        debug_assert!(subset.windows(2).all(|w| w[0] < w[1]));
        Self {
            rows,
            subset: Some(subset),
        }
    }

    pub fn len(&self) -> usize {
        self.subset.map_or(self.rows.n(), <[u32]>::len)
    }

    #[inline]
    fn source(&self, i: usize) -> usize {
        self.subset.map_or(i, |s| s[i] as usize)
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [f32] {
        self.rows.row(self.source(i))
    }

    fn position_of(&self, source: u32) -> Option<usize> {
        match self.subset {
            None => ((source as usize) < self.rows.n()).then_some(source as usize),
            Some(s) => s.binary_search(&source).ok(),
        }
    }
}

/// Worst-case gap between the scanned f32 cosine and the exact value for a
/// unit query: covers d-term accumulation plus normalization roundings.
fn scan_error_bound(d: usize) -> f32 {
    (d as f32 + 16.0) * f32::EPSILON
}

fn norm64(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn dot64(q: &[f64], r: &[f32]) -> f64 {
    q.iter().zip(r).map(|(&a, &b)| a * f64::from(b)).sum()
}

struct Candidates {
    k: usize,
    slack: f32,
    floor: f32,
    cap: usize,
    items: Vec<(f32, u32)>,
}

impl Candidates {
    fn new(k: usize, slack: f32) -> Self {
        Self {
            k,
            slack,
            floor: f32::NEG_INFINITY,
            cap: 2 * k + 256,
            items: Vec::new(),
        }
    }

    #[inline]
    fn offer(&mut self, sims: &[f32], inv_norms: &[f32], base: u32, skip: Option<u32>) {
        let floor = self.floor;
        for (j, (&s, &w)) in sims.iter().zip(inv_norms).enumerate() {
            let v = s * w;
            if v >= floor {
                let pos = base + j as u32;
                if Some(pos) != skip {
                    self.items.push((v, pos));
                }
            }
        }
        if self.items.len() > self.cap {
            self.prune();
        }
    }

    fn prune(&mut self) {
        if self.items.len() < self.k {
            return;
        }
        let (_, kth, _) = self
            .items
            .select_nth_unstable_by(self.k - 1, |a, b| b.0.total_cmp(&a.0));
        let floor = kth.0 - self.slack;
        if floor > self.floor {
            self.floor = floor;
        }
        let floor = self.floor;
        self.items.retain(|c| c.0 >= floor);
        self.cap = self.cap.max(2 * self.items.len());
    }
}

/// Core search over selections; excluded rows are given as source indices.
pub(crate) fn search(
    queries: Selection<'_>,
    refs: Selection<'_>,
    cfg: &KnnConfig,
    excluded: &(dyn Fn(usize) -> Option<u32> + Sync),
) -> Result<NeighborList> {
    cfg.validate()?;
    let k = cfg.k;
    let d = refs.rows.d();
    if queries.rows.d() != d {
        return Err(Error::DimensionMismatch {
            left: queries.rows.d(),
            right: d,
        });
    }
    let nq = queries.len();
    let nr = refs.len();

    let skip: Vec<Option<u32>> = (0..nq)
        .map(|q| excluded(q).and_then(|s| refs.position_of(s)).map(|p| p as u32))
        .collect();
    let available = nr - usize::from(skip.iter().any(Option::is_some));
    if k > available {
        return Err(Error::KTooLarge { k, available });
    }

    let ref_norms: Vec<f64> = (0..nr).into_par_iter().map(|j| norm64(refs.row(j))).collect();
    let query_norms: Vec<f64> = (0..nq)
        .into_par_iter()
        .map(|i| norm64(queries.row(i)))
        .collect();
    if ref_norms.iter().chain(&query_norms).any(|n| !n.is_finite()) {
        return Err(Error::arg("non-finite values in search input"));
    }
    let inv_norms: Vec<f32> = ref_norms
        .iter()
        .map(|&n| if n > 0.0 { (1.0 / n) as f32 } else { 0.0 })
        .collect();
    let slack = 2.0 * scan_error_bound(d);
    let rb = cfg.ref_batch.min(nr.max(1));

    let mut entries = vec![Neighbor::default(); nq * k];
    entries
        .par_chunks_mut(cfg.query_batch * k)
        .enumerate()
        .for_each(|(block, out)| {
            let q0 = block * cfg.query_batch;
            let m = out.len() / k;
            let mut q64 = vec![0.0f64; m * d];
            let mut q32 = vec![0.0f32; m * d];
            for i in 0..m {
                let norm = query_norms[q0 + i];
                let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
                for (t, &v) in queries.row(q0 + i).iter().enumerate() {
                    let x = f64::from(v) * scale;
                    q64[i * d + t] = x;
                    q32[i * d + t] = x as f32;
                }
            }
            let mut cands: Vec<Candidates> = (0..m).map(|_| Candidates::new(k, slack)).collect();
            let mut sims = vec![0.0f32; m * rb];
            let mut gathered = if refs.subset.is_some() {
                vec![0.0f32; rb * d]
            } else {
                Vec::new()
            };
            for r0 in (0..nr).step_by(rb) {
                let len = rb.min(nr - r0);
                let block_rows: &[f32] = match refs.subset {
                    None => &refs.rows.data()[r0 * d..(r0 + len) * d],
                    Some(_) => {
                        for j in 0..len {
                            gathered[j * d..(j + 1) * d].copy_from_slice(refs.row(r0 + j));
                        }
                        &gathered[..len * d]
                    }
                };
                // sims (m x len) = q32 (m x d) * block_rows^T (d x len)
                unsafe {
                    matrixmultiply::sgemm(
                        m,
                        d,
                        len,
                        1.0,
                        q32.as_ptr(),
                        d as isize,
                        1,
                        block_rows.as_ptr(),
                        1,
                        d as isize,
                        0.0,
                        sims.as_mut_ptr(),
                        len as isize,
                        1,
                    );
                }
                for (i, c) in cands.iter_mut().enumerate() {
                    c.offer(
                        &sims[i * len..(i + 1) * len],
                        &inv_norms[r0..r0 + len],
                        r0 as u32,
                        skip[q0 + i],
                    );
                }
            }
            for (i, mut c) in cands.into_iter().enumerate() {
                c.prune();
                let q = &q64[i * d..(i + 1) * d];
                let mut exact: Vec<(f64, u32)> = c
                    .items
                    .iter()
                    .map(|&(_, pos)| {
                        let p = pos as usize;
                        let s = if ref_norms[p] > 0.0 {
                            dot64(q, refs.row(p)) / ref_norms[p]
                        } else {
                            0.0
                        };
                        (s, refs.source(p) as u32)
                    })
                    .collect();
                exact.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                debug_assert!(exact.len() >= k);
                for (slot, &(s, index)) in out[i * k..(i + 1) * k].iter_mut().zip(&exact) {
                    *slot = Neighbor {
                        index,
                        similarity: s as f32,
                    };
                }
            }
        });
    Ok(NeighborList { k, entries })
}

/// The `k` most cosine-similar reference rows for every query.
pub fn top_k(
    queries: &EmbeddingStore,
    refs: &EmbeddingStore,
    k: usize,
    policy: &PairingPolicy,
) -> Result<NeighborList> {
    top_k_with(queries.rows(), refs.rows(), &KnnConfig::new(k), policy)
}

pub fn top_k_with(
    queries: Rows<'_>,
    refs: Rows<'_>,
    cfg: &KnnConfig,
    policy: &PairingPolicy,
) -> Result<NeighborList> {
    if let Some(ex) = &policy.excluded {
        if ex.len() != queries.n() {
            return Err(Error::LengthMismatch {
                expected: queries.n(),
                actual: ex.len(),
            });
        }
    }
    search(
        Selection::all(queries),
        Selection::all(refs),
        cfg,
        &|q| policy.excluded_for(q),
    )
}

/// Most frequent class among the first `k` neighbors. Ties go to the class
/// with the larger summed similarity, then to the smaller class id.
pub fn vote(neighbors: &[Neighbor], ref_labels: &LabelSet, k: usize) -> u32 {
    debug_assert!(k >= 1 && neighbors.len() >= k);
    let mut tally: Vec<(u32, u32, f64)> = Vec::with_capacity(k);
    for n in &neighbors[..k] {
        let class = ref_labels.primary(n.index as usize);
        match tally.iter_mut().find(|t| t.0 == class) {
            Some(t) => {
                t.1 += 1;
                t.2 += f64::from(n.similarity);
            }
            None => tally.push((class, 1, f64::from(n.similarity))),
        }
    }
    tally
        .into_iter()
        .max_by(|a, b| {
            a.1.cmp(&b.1)
                .then(a.2.total_cmp(&b.2))
                .then(b.0.cmp(&a.0))
        })
        .map(|t| t.0)
        .expect("k >= 1")
}

pub(crate) fn predictions_from(
    neighbors: &NeighborList,
    ref_labels: &LabelSet,
    k: usize,
    sample_ids: Vec<String>,
    variant: String,
) -> Result<PredictionSet> {
    let classes = neighbors
        .iter()
        .map(|row| vote(row, ref_labels, k))
        .collect();
    PredictionSet::new(sample_ids, classes, ref_labels.class_count(), variant)
}

pub(crate) fn check_ref_labels(refs: &EmbeddingStore, ref_labels: &LabelSet) -> Result<()> {
    if ref_labels.len() != refs.n() {
        return Err(Error::LengthMismatch {
            expected: refs.n(),
            actual: ref_labels.len(),
        });
    }
    if !ref_labels.is_single_label() {
        let row = (0..ref_labels.len())
            .find(|&i| ref_labels.get(i).len() != 1)
            .unwrap_or(0);
        return Err(Error::MultiLabel(row));
    }
    Ok(())
}

/// k-NN classification of every query row against labelled references.
pub fn classify_knn(
    queries: &EmbeddingStore,
    refs: &EmbeddingStore,
    ref_labels: &LabelSet,
    k: usize,
    policy: &PairingPolicy,
) -> Result<PredictionSet> {
    check_ref_labels(refs, ref_labels)?;
    let nl = top_k(queries, refs, k, policy)?;
    predictions_from(
        &nl,
        ref_labels,
        k,
        queries.sample_ids().to_vec(),
        format!("knn k={k}"),
    )
}

/// Predictions and accuracy for every k of a grid.
#[derive(Clone, Debug)]
pub struct KSweep {
    pub ks: Vec<usize>,
    pub predictions: Vec<PredictionSet>,
    pub accuracy: Vec<f64>,
}

impl KSweep {
    /// Best k by accuracy; ties go to the smaller k.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.ks
            .iter()
            .zip(&self.accuracy)
            .fold(None, |best: Option<(usize, f64)>, (&k, &a)| match best {
                Some((bk, ba)) if ba > a || (ba == a && bk < k) => Some((bk, ba)),
                _ => Some((k, a)),
            })
    }
}

pub(crate) fn check_grid(k_grid: &[usize]) -> Result<usize> {
    if k_grid.is_empty() || k_grid.contains(&0) {
        return Err(Error::arg("k grid must be non-empty with every k >= 1"));
    }
    Ok(*k_grid.iter().max().unwrap())
}

/// One search at the largest k; every grid value votes over its prefix.
/// A query counts as correct when its prediction is in its label set.
pub fn sweep_k(
    queries: &EmbeddingStore,
    refs: &EmbeddingStore,
    ref_labels: &LabelSet,
    k_grid: &[usize],
    eval_labels: &LabelSet,
    policy: &PairingPolicy,
) -> Result<KSweep> {
    let k_max = check_grid(k_grid)?;
    check_ref_labels(refs, ref_labels)?;
    if eval_labels.len() != queries.n() {
        return Err(Error::LengthMismatch {
            expected: queries.n(),
            actual: eval_labels.len(),
        });
    }
    let nl = top_k(queries, refs, k_max, policy)?;
    let mut out = KSweep {
        ks: k_grid.to_vec(),
        predictions: Vec::with_capacity(k_grid.len()),
        accuracy: Vec::with_capacity(k_grid.len()),
    };
    for &k in k_grid {
        let p = predictions_from(
            &nl,
            ref_labels,
            k,
            queries.sample_ids().to_vec(),
            format!("knn k={k}"),
        )?;
        let correct = p
            .classes()
            .iter()
            .enumerate()
            .filter(|(i, &c)| eval_labels.contains(*i, c))
            .count();
        out.accuracy.push(correct as f64 / queries.n().max(1) as f64);
        out.predictions.push(p);
    }
    Ok(out)
}
