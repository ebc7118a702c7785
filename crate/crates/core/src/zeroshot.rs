//! Zero-shot classification: class prototypes averaged over prompt
//! templates, argmax-cosine assignment, and k-NN in prompt space.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::knn::{self, KnnConfig, Selection};
use crate::predictions::PredictionSet;
use crate::store::{
    load_store, save_store, DatasetManifest, EmbeddingStore, LabelSet, NameSet, PromptBank, Role,
};

/// Which templates of a bank are averaged into a prototype.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TemplateSelection {
    Single(usize),
    /// Every template except the bare class name.
    Avg,
    /// Every template, the bare class name included.
    AvgPrime,
    Custom(Vec<usize>),
}

impl TemplateSelection {
    /// Template ids in ascending order.
    pub fn resolve(&self, bank: &PromptBank) -> Result<Vec<usize>> {
        let t = bank.template_count();
        let mut ids = match self {
            TemplateSelection::Single(i) => vec![*i],
            TemplateSelection::AvgPrime => (0..t).collect(),
            TemplateSelection::Avg => {
                let skip = bank.no_context_template();
                (0..t).filter(|&i| Some(i) != skip).collect()
            }
            TemplateSelection::Custom(ids) => ids.clone(),
        };
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::arg(format!("template selection {self} is empty")));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= t) {
            return Err(Error::arg(format!(
                "template {bad} not in a bank of {t} templates"
            )));
        }
        Ok(ids)
    }
}

impl fmt::Display for TemplateSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateSelection::Single(i) => write!(f, "t{i}"),
            TemplateSelection::Avg => f.write_str("avg"),
            TemplateSelection::AvgPrime => f.write_str("avg'"),
            TemplateSelection::Custom(ids) => {
                let ids: Vec<String> = ids.iter().map(usize::to_string).collect();
                write!(f, "{}", ids.join(","))
            }
        }
    }
}

/// Parses `avg`, `avg'` (or `avg-prime`), `t<i>` and comma-separated ids.
impl FromStr for TemplateSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "avg" => return Ok(TemplateSelection::Avg),
            "avg'" | "avg-prime" | "avgprime" => return Ok(TemplateSelection::AvgPrime),
            _ => {}
        }
        if let Some(i) = s.strip_prefix('t').and_then(|r| r.parse().ok()) {
            return Ok(TemplateSelection::Single(i));
        }
        let ids: std::result::Result<Vec<usize>, _> =
            s.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match ids {
            Ok(ids) if ids.len() == 1 => Ok(TemplateSelection::Single(ids[0])),
            Ok(ids) => Ok(TemplateSelection::Custom(ids)),
            Err(_) => Err(Error::arg(format!("unknown template selection {s:?}"))),
        }
    }
}

/// One prototype row per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPrototypeMatrix {
    store: EmbeddingStore,
    templates: Vec<usize>,
    name_set: Option<NameSet>,
    renormalized: bool,
}

impl ClassPrototypeMatrix {
    pub fn class_count(&self) -> usize {
        self.store.n()
    }

    pub fn d(&self) -> usize {
        self.store.d()
    }

    pub fn row(&self, class: usize) -> &[f32] {
        self.store.row(class)
    }

    /// Rows as a text store, row `c` = class `c`.
    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn templates(&self) -> &[usize] {
        &self.templates
    }

    pub fn name_set(&self) -> Option<NameSet> {
        self.name_set
    }

    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    fn manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::new(self.class_count() as u32);
        m.name_set = self.name_set;
        let ids: Vec<String> = self.templates.iter().map(usize::to_string).collect();
        m.provenance.insert("templates".into(), ids.join(","));
        m.provenance
            .insert("renormalized".into(), self.renormalized.to_string());
        m
    }

    /// Only renormalized matrices pass store validation.
    pub fn save(&self, path: &Path) -> Result<()> {
        let labels = LabelSet::from_single(
            (0..self.class_count() as u32).collect(),
            self.class_count() as u32,
        );
        save_store(&self.store, &labels, &self.manifest(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, _, manifest) = load_store(path)?;
        let bad = |what: &str| Error::arg(format!("prototype manifest lacks {what}"));
        let templates = manifest
            .provenance
            .get("templates")
            .ok_or_else(|| bad("templates"))?
            .split(',')
            .map(|t| t.parse::<usize>().map_err(|_| bad("valid template ids")))
            .collect::<Result<Vec<_>>>()?;
        let renormalized = manifest
            .provenance
            .get("renormalized")
            .map(|v| v == "true")
            .ok_or_else(|| bad("renormalized flag"))?;
        Ok(Self {
            store,
            templates,
            name_set: manifest.name_set,
            renormalized,
        })
    }
}

/// Prototype of class `c` = mean of the selected templates' embeddings of
/// `c`, scaled to unit length when `renormalize` is set. Sums run in f64 in
/// ascending template order.
pub fn build_prototypes(
    bank: &PromptBank,
    selection: &TemplateSelection,
    renormalize: bool,
) -> Result<ClassPrototypeMatrix> {
    let templates = selection.resolve(bank)?;
    let (c, d) = (bank.class_count(), bank.d());
    let mut data = Vec::with_capacity(c * d);
    let mut acc = vec![0.0f64; d];
    for class in 0..c {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &t in &templates {
            let row = bank.embedding(t, class).ok_or_else(|| {
                Error::arg(format!("bank has no row for template {t}, class {class}"))
            })?;
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += f64::from(v);
            }
        }
        let mut scale = 1.0 / templates.len() as f64;
        if renormalize {
            let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt() * scale;
            if norm > 0.0 {
                scale /= norm;
            }
        }
        data.extend(acc.iter().map(|&a| (a * scale) as f32));
    }
    let store = EmbeddingStore::with_numbered_ids(d, data, "class", Role::Text)?;
    Ok(ClassPrototypeMatrix {
        store,
        templates,
        name_set: bank.name_set(),
        renormalized: renormalize,
    })
}

/// Class of the most cosine-similar prototype for every image; ties go to
/// the smaller class id.
pub fn classify_zeroshot(
    images: &EmbeddingStore,
    protos: &ClassPrototypeMatrix,
) -> Result<PredictionSet> {
    let nl = knn::search(
        Selection::all(images.rows()),
        Selection::all(protos.store.rows()),
        &KnnConfig::new(1),
        &|_| None,
    )?;
    let classes = nl.iter().map(|row| row[0].index).collect();
    let variant = format!(
        "zeroshot templates={}{}",
        protos
            .templates
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
        protos
            .name_set
            .map(|n| format!(" names={n}"))
            .unwrap_or_default()
    );
    PredictionSet::new(
        images.sample_ids().to_vec(),
        classes,
        protos.class_count() as u32,
        variant,
    )
}

/// k-NN over every bank row, each row labelled with its class.
pub fn prompt_space_knn(
    images: &EmbeddingStore,
    bank: &PromptBank,
    k: usize,
) -> Result<PredictionSet> {
    let all: Vec<usize> = (0..bank.template_count()).collect();
    prompt_space_knn_templates(images, bank, &all, k)
}

/// [`prompt_space_knn`] restricted to some templates.
pub fn prompt_space_knn_templates(
    images: &EmbeddingStore,
    bank: &PromptBank,
    templates: &[usize],
    k: usize,
) -> Result<PredictionSet> {
    let mut ids = TemplateSelection::Custom(templates.to_vec()).resolve(bank)?;
    ids.dedup();
    let c = bank.class_count() as u32;
    let rows: Vec<u32> = ids
        .iter()
        .flat_map(|&t| (0..c).map(move |class| t as u32 * c + class))
        .collect();
    let nl = knn::search(
        Selection::all(images.rows()),
        Selection::subset(bank.store().rows(), &rows),
        &KnnConfig::new(k),
        &|_| None,
    )?;
    let all = ids.len() == bank.template_count();
    let variant = if all {
        format!("prompt-knn k={k}")
    } else {
        let t: Vec<String> = ids.iter().map(usize::to_string).collect();
        format!("prompt-knn k={k} templates={}", t.join(","))
    };
    knn::predictions_from(&nl, bank.labels(), k, images.sample_ids().to_vec(), variant)
}

/// Zero-shot predictions under each single template of the bank.
pub fn per_template_predictions(
    images: &EmbeddingStore,
    bank: &PromptBank,
) -> Result<Vec<PredictionSet>> {
    (0..bank.template_count())
        .map(|t| {
            let p = build_prototypes(bank, &TemplateSelection::Single(t), false)?;
            Ok(classify_zeroshot(images, &p)?.with_variant(bank.templates()[t].clone()))
        })
        .collect()
}
