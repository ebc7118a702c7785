use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::store::{load_store, DatasetManifest, EmbeddingStore, LabelSet, NameSet, Role};

/// Text embeddings of every (template, class) prompt.
///
/// Rows are template-major: prompt `(t, c)` lives at row `t * C + c`, so the
/// index is a bijection onto the rows by construction.
#[derive(Clone, Debug)]
pub struct PromptBank {
    store: EmbeddingStore,
    labels: LabelSet,
    templates: Vec<String>,
    class_count: usize,
    name_set: Option<NameSet>,
}

impl PromptBank {
    pub fn new(store: EmbeddingStore, templates: Vec<String>, class_count: usize) -> Result<Self> {
        if store.role() != Role::Text {
            return Err(FormatError::WrongRole {
                expected: "text",
                found: store.role().as_str(),
            }
            .into());
        }
        if templates.is_empty() || class_count == 0 {
            return Err(Error::arg("a prompt bank needs at least one template and class"));
        }
        if store.n() != templates.len() * class_count {
            return Err(Error::LengthMismatch {
                expected: templates.len() * class_count,
                actual: store.n(),
            });
        }
        let labels = LabelSet::from_single(
            (0..store.n()).map(|r| (r % class_count) as u32).collect(),
            class_count as u32,
        );
        Ok(Self {
            store,
            labels,
            templates,
            class_count,
            name_set: None,
        })
    }

    pub fn with_name_set(mut self, name_set: NameSet) -> Self {
        self.name_set = Some(name_set);
        self
    }

    /// Bank from a loaded store triple; the stored labels must follow the
    /// template-major layout.
    pub fn from_parts(store: EmbeddingStore, labels: &LabelSet, manifest: &DatasetManifest) -> Result<Self> {
        let c = manifest.class_count as usize;
        let templates = match &manifest.templates {
            Some(t) => t.clone(),
            None if c > 0 => (0..store.n() / c).map(|t| format!("template {t}")).collect(),
            None => Vec::new(),
        };
        let mut bank = Self::new(store, templates, c)?;
        for r in 0..bank.store.n() {
            if labels.get(r) != [(r % c) as u32] {
                return Err(Error::arg(format!(
                    "prompt bank row {r} is labelled {:?}, expected class {}",
                    labels.get(r),
                    r % c
                )));
            }
        }
        bank.name_set = manifest.name_set;
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, labels, manifest) = load_store(path)?;
        Self::from_parts(store, &labels, &manifest)
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    /// Class of every bank row.
    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name_set(&self) -> Option<NameSet> {
        self.name_set
    }

    pub fn d(&self) -> usize {
        self.store.d()
    }

    pub fn row_index(&self, template: usize, class: usize) -> Option<usize> {
        (template < self.templates.len() && class < self.class_count)
            .then(|| template * self.class_count + class)
    }

    pub fn embedding(&self, template: usize, class: usize) -> Option<&[f32]> {
        self.row_index(template, class).map(|r| self.store.row(r))
    }

    /// Rows of one template as a standalone store (row `c` = class `c`).
    pub fn template_rows(&self, template: usize) -> Option<EmbeddingStore> {
        let start = self.row_index(template, 0)? as u32;
        let rows: Vec<u32> = (start..start + self.class_count as u32).collect();
        Some(self.store.gather(&rows))
    }

    /// The template made of the class-name slot alone (`{}` or `{class name}`).
    pub fn no_context_template(&self) -> Option<usize> {
        self.templates.iter().position(|t| {
            let t = t.trim().trim_end_matches('.');
            t == "{}" || t == "{class name}"
        })
    }

    /// Manifest describing this bank's layout, for [`crate::store::save_store`].
    pub fn to_manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::new(self.class_count as u32);
        m.templates = Some(self.templates.clone());
        m.name_set = self.name_set;
        m
    }
}
