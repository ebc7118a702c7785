//! Human-readable sidecars: the per-store dataset manifest and the class
//! catalog with its name sets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::LabelSet;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Class-name sets used to instantiate prompt templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NameSet {
    #[serde(rename = "wordnet")]
    WordNet,
    #[serde(rename = "openai")]
    OpenAi,
    #[serde(rename = "openai+")]
    OpenAiPlus,
}

impl NameSet {
    pub const ALL: [NameSet; 3] = [NameSet::WordNet, NameSet::OpenAi, NameSet::OpenAiPlus];

    pub fn as_str(self) -> &'static str {
        match self {
            NameSet::WordNet => "wordnet",
            NameSet::OpenAi => "openai",
            NameSet::OpenAiPlus => "openai+",
        }
    }
}

impl fmt::Display for NameSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NameSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wordnet" => Ok(NameSet::WordNet),
            "openai" => Ok(NameSet::OpenAi),
            "openai+" | "openai-plus" | "openaiplus" => Ok(NameSet::OpenAiPlus),
            other => Err(Error::arg(format!("unknown class-name set {other:?}"))),
        }
    }
}

/// Sidecar describing one binary store.
///
/// `class_count` lives here rather than being inferred from labels so that
/// classes without samples stay representable. `multi_labels`, when present,
/// has one entry per `cleaner_mask`-true sample, in row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub class_count: u32,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub backbone: String,
    /// Hex SHA-256 of the data section of the binary file.
    #[serde(default)]
    pub data_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleaner_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_labels: Option<Vec<Vec<u32>>>,
    /// Template strings, for prompt banks. `{}` marks the class-name slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_set: Option<NameSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn new(class_count: u32) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            split: None,
            class_count,
            model: String::new(),
            backbone: String::new(),
            data_sha256: String::new(),
            cleaner_mask: None,
            multi_labels: None,
            templates: None,
            name_set: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    /// Multi-label sets of the cleaner samples as a `LabelSet`, aligned with
    /// the cleaner-mask-true rows in order.
    pub fn cleaner_labels(&self) -> Option<LabelSet> {
        self.multi_labels
            .as_ref()
            .map(|sets| LabelSet::from_sets(sets, self.class_count))
    }

    /// Row indices selected by the cleaner mask.
    pub fn cleaner_rows(&self) -> Option<Vec<u32>> {
        self.cleaner_mask.as_ref().map(|mask| {
            mask.iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i as u32)
                .collect()
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Manifest {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Sidecar path for a binary store: `<file>.manifest.json`.
pub fn manifest_path(store_path: &Path) -> PathBuf {
    let mut name = store_path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u32,
    pub names: BTreeMap<NameSet, String>,
}

/// Class ids with their display names under each name set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub classes: Vec<ClassEntry>,
}

impl ClassCatalog {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn name(&self, class: u32, set: NameSet) -> Option<&str> {
        self.classes
            .get(class as usize)
            .and_then(|e| e.names.get(&set))
            .map(String::as_str)
    }

    /// Problems with the catalog, one message per violation. Every class id
    /// `0..C` must appear in order and carry a non-empty name in every set.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, entry) in self.classes.iter().enumerate() {
            if entry.id as usize != i {
                out.push(format!("entry {i} has id {}", entry.id));
            }
            for set in NameSet::ALL {
                match entry.names.get(&set) {
                    Some(name) if !name.trim().is_empty() => {}
                    Some(_) => out.push(format!("class {i}: empty {set} name")),
                    None => out.push(format!("class {i}: missing {set} name")),
                }
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Manifest {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("catalog serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
