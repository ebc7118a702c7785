//! Embedding stores: unit-normalized row matrices with labels and a
//! manifest sidecar, plus validation, persistence and slicing.

mod bank;
mod format;
mod labels;
mod manifest;

use std::collections::HashMap;
use std::fmt;

use sha2::{Digest, Sha256};

pub use bank::PromptBank;
pub use format::{load_store, save_store, CONTAINER_VERSION, MAGIC};
pub(crate) use format::{read_container, write_container, Words};
pub use labels::LabelSet;
pub use manifest::{
    manifest_path, ClassCatalog, ClassEntry, DatasetManifest, NameSet, Split, MANIFEST_VERSION,
};

use crate::error::{Error, Result};

/// Allowed deviation of a row's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Image,
    Text,
    Neighbors,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Image => 0,
            Role::Text => 1,
            Role::Neighbors => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Role::Image),
            1 => Some(Role::Text),
            2 => Some(Role::Neighbors),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Image => "image",
            Role::Text => "text",
            Role::Neighbors => "neighbors",
        }
    }
}

/// Borrowed row-major `n x d` matrix.
#[derive(Clone, Copy, Debug)]
pub struct Rows<'a> {
    data: &'a [f32],
    n: usize,
    d: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f32], d: usize) -> Result<Self> {
        if d == 0 || data.len() % d != 0 {
            return Err(Error::arg(format!(
                "{} values do not form rows of width {d}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n: data.len() / d,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &'a [f32] {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Immutable matrix of embedding rows with one opaque id per row.
///
/// Construction checks only shape; the content invariants (unit rows,
/// finite values, unique ids) are reported by [`validate_store`] and
/// enforced by [`save_store`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    d: usize,
    data: Vec<f32>,
    sample_ids: Vec<String>,
    role: Role,
}

impl EmbeddingStore {
    pub fn new(d: usize, data: Vec<f32>, sample_ids: Vec<String>, role: Role) -> Result<Self> {
        if d == 0 {
            return Err(Error::arg("embedding dimension must be at least 1"));
        }
        if data.len() != sample_ids.len() * d {
            return Err(Error::LengthMismatch {
                expected: sample_ids.len() * d,
                actual: data.len(),
            });
        }
        Ok(Self {
            d,
            data,
            sample_ids,
            role,
        })
    }

    /// Store with ids `"{prefix}{row}"`.
    pub fn with_numbered_ids(d: usize, data: Vec<f32>, prefix: &str, role: Role) -> Result<Self> {
        let n = if d == 0 { 0 } else { data.len() / d };
        let ids = (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(d, data, ids, role)
    }

    pub fn n(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Rows<'_> {
        Rows {
            data: &self.data,
            n: self.n(),
            d: self.d,
        }
    }

    /// Hex SHA-256 of the little-endian data section.
    pub fn data_sha256(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::with_capacity(4096 * 4);
        for chunk in self.data.chunks(4096) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            hasher.update(&buf);
        }
        hex::encode(hasher.finalize())
    }

    /// Copy of the given rows, in the given order.
    pub fn gather(&self, rows: &[u32]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r as usize));
            ids.push(self.sample_ids[r as usize].clone());
        }
        Self {
            d: self.d,
            data,
            sample_ids: ids,
            role: self.role,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiagnosticKind {
    EmptyStore,
    NonFinite { column: usize },
    Norm { norm: f64 },
    DuplicateId { first: usize },
    LabelCount { labels: usize, rows: usize },
    EmptyLabelSet,
    LabelOutOfRange { class: u32, class_count: u32 },
    ClassCountMismatch { labels: u32, manifest: u32 },
    MaskLength { mask: usize, rows: usize },
    MultiLabelCount { sets: usize, cleaner: usize },
    HashMismatch,
}

/// One invariant violation; `row` names the offending sample when there is one.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub row: Option<usize>,
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    fn at(row: usize, kind: DiagnosticKind) -> Self {
        Self {
            row: Some(row),
            kind,
        }
    }

    fn global(kind: DiagnosticKind) -> Self {
        Self { row: None, kind }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(row) = self.row {
            write!(f, "row {row}: ")?;
        }
        match &self.kind {
            DiagnosticKind::EmptyStore => write!(f, "store has no rows"),
            DiagnosticKind::NonFinite { column } => {
                write!(f, "non-finite value in column {column}")
            }
            DiagnosticKind::Norm { norm } => {
                write!(f, "L2 norm {norm:.6} outside 1 +/- {NORM_TOLERANCE}")
            }
            DiagnosticKind::DuplicateId { first } => {
                write!(f, "sample id duplicates row {first}")
            }
            DiagnosticKind::LabelCount { labels, rows } => {
                write!(f, "{labels} label sets for {rows} rows")
            }
            DiagnosticKind::EmptyLabelSet => write!(f, "empty label set"),
            DiagnosticKind::LabelOutOfRange { class, class_count } => {
                write!(f, "label {class} out of range for {class_count} classes")
            }
            DiagnosticKind::ClassCountMismatch { labels, manifest } => write!(
                f,
                "labels declare {labels} classes, manifest declares {manifest}"
            ),
            DiagnosticKind::MaskLength { mask, rows } => {
                write!(f, "cleaner mask has {mask} entries for {rows} rows")
            }
            DiagnosticKind::MultiLabelCount { sets, cleaner } => write!(
                f,
                "{sets} multi-label sets for {cleaner} cleaner-mask samples"
            ),
            DiagnosticKind::HashMismatch => {
                write!(f, "manifest content hash does not match the data")
            }
        }
    }
}

fn label_diagnostics(labels: &LabelSet, first_row: usize, out: &mut Vec<Diagnostic>) {
    let c = labels.class_count();
    for (i, set) in labels.iter().enumerate() {
        if set.is_empty() {
            out.push(Diagnostic::at(first_row + i, DiagnosticKind::EmptyLabelSet));
        }
        for &id in set {
            if id >= c {
                out.push(Diagnostic::at(
                    first_row + i,
                    DiagnosticKind::LabelOutOfRange {
                        class: id,
                        class_count: c,
                    },
                ));
            }
        }
    }
}

/// Check every store invariant; an empty result means the triple is valid.
///
/// The manifest's content hash is not checked here (that costs a full pass
/// over the data); [`load_store`] verifies it.
pub fn validate_store(
    store: &EmbeddingStore,
    labels: Option<&LabelSet>,
    manifest: Option<&DatasetManifest>,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if store.n() == 0 {
        out.push(Diagnostic::global(DiagnosticKind::EmptyStore));
    }
    for i in 0..store.n() {
        let row = store.row(i);
        if let Some(column) = row.iter().position(|v| !v.is_finite()) {
            out.push(Diagnostic::at(i, DiagnosticKind::NonFinite { column }));
            continue;
        }
        let norm = row
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            out.push(Diagnostic::at(i, DiagnosticKind::Norm { norm }));
        }
    }
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(store.n());
    for (i, id) in store.sample_ids().iter().enumerate() {
        if let Some(&first) = seen.get(id.as_str()) {
            out.push(Diagnostic::at(i, DiagnosticKind::DuplicateId { first }));
        } else {
            seen.insert(id, i);
        }
    }
    if let Some(labels) = labels {
        if labels.len() != store.n() {
            out.push(Diagnostic::global(DiagnosticKind::LabelCount {
                labels: labels.len(),
                rows: store.n(),
            }));
        }
        label_diagnostics(labels, 0, &mut out);
        if let Some(m) = manifest {
            if m.class_count != labels.class_count() {
                out.push(Diagnostic::global(DiagnosticKind::ClassCountMismatch {
                    labels: labels.class_count(),
                    manifest: m.class_count,
                }));
            }
        }
    }
    if let Some(m) = manifest {
        if let Some(mask) = &m.cleaner_mask {
            if mask.len() != store.n() {
                out.push(Diagnostic::global(DiagnosticKind::MaskLength {
                    mask: mask.len(),
                    rows: store.n(),
                }));
            }
            if let Some(sets) = &m.multi_labels {
                let cleaner = mask.iter().filter(|&&b| b).count();
                if sets.len() != cleaner {
                    out.push(Diagnostic::global(DiagnosticKind::MultiLabelCount {
                        sets: sets.len(),
                        cleaner,
                    }));
                }
                if let Some(ml) = m.cleaner_labels() {
                    let rows = m.cleaner_rows().unwrap_or_default();
                    let mut local = Vec::new();
                    label_diagnostics(&ml, 0, &mut local);
                    for mut d in local {
                        d.row = d.row.and_then(|r| rows.get(r).map(|&x| x as usize));
                        out.push(d);
                    }
                }
            }
        } else if let Some(sets) = &m.multi_labels {
            out.push(Diagnostic::global(DiagnosticKind::MultiLabelCount {
                sets: sets.len(),
                cleaner: 0,
            }));
        }
    }
    out
}

/// Rows where `mask` is true, with labels and manifest restricted to match.
/// Row order and sample ids are preserved.
pub fn subset(
    store: &EmbeddingStore,
    labels: &LabelSet,
    manifest: &DatasetManifest,
    mask: &[bool],
) -> Result<(EmbeddingStore, LabelSet, DatasetManifest)> {
    if mask.len() != store.n() {
        return Err(Error::LengthMismatch {
            expected: store.n(),
            actual: mask.len(),
        });
    }
    if labels.len() != store.n() {
        return Err(Error::LengthMismatch {
            expected: store.n(),
            actual: labels.len(),
        });
    }
    let rows: Vec<u32> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i as u32)
        .collect();
    if rows.is_empty() {
        return Err(Error::Invalid(vec![Diagnostic::global(
            DiagnosticKind::EmptyStore,
        )]));
    }
    let out_store = store.gather(&rows);
    let out_labels = labels.select(&rows);
    let mut out_manifest = manifest.clone();
    if let Some(cleaner) = &manifest.cleaner_mask {
        if cleaner.len() != store.n() {
            return Err(Error::LengthMismatch {
                expected: store.n(),
                actual: cleaner.len(),
            });
        }
        out_manifest.cleaner_mask = Some(rows.iter().map(|&r| cleaner[r as usize]).collect());
        if let Some(sets) = &manifest.multi_labels {
            let mut kept = Vec::new();
            let mut cursor = 0usize;
            for (i, &is_cleaner) in cleaner.iter().enumerate() {
                if is_cleaner {
                    if mask[i] {
                        let set = sets.get(cursor).ok_or(Error::LengthMismatch {
                            expected: cursor + 1,
                            actual: sets.len(),
                        })?;
                        kept.push(set.clone());
                    }
                    cursor += 1;
                }
            }
            out_manifest.multi_labels = Some(kept);
        }
    }
    out_manifest.data_sha256 = out_store.data_sha256();
    Ok((out_store, out_labels, out_manifest))
}
