use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use embclass::store::manifest_path;
use embclass::{load_store, DatasetManifest, EmbeddingStore, GroundTruth, LabelSet, PromptBank};

use crate::config::RunConfig;
use crate::error::{io_err, CliError};

/// One loaded image store with its labels and sidecar.
pub struct Images {
    pub store: EmbeddingStore,
    pub labels: LabelSet,
    pub manifest: DatasetManifest,
}

impl Images {
    pub fn sha256(&self) -> &str {
        &self.manifest.data_sha256
    }

    pub fn truth(&self) -> Result<GroundTruth, CliError> {
        Ok(GroundTruth::from_store(&self.store, &self.labels)?)
    }

    /// Multi-label ground truth of the cleaner subset, if the manifest has one.
    pub fn cleaner_truth(&self) -> Result<Option<GroundTruth>, CliError> {
        if self.manifest.cleaner_mask.is_none() || self.manifest.multi_labels.is_none() {
            return Ok(None);
        }
        Ok(Some(GroundTruth::cleaner(&self.store, &self.manifest)?))
    }
}

/// The path under `key`, which must be set and exist.
pub fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{key} is not set")))?;
    ensure_exists(p)?;
    Ok(p)
}

pub fn ensure_exists(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(io_err(p, "no such file"))
    }
}

/// A store and its sidecar must both be present before anything is read.
pub fn ensure_store_exists(p: &Path) -> Result<(), CliError> {
    ensure_exists(p)?;
    ensure_exists(&manifest_path(p))
}

pub fn load_images(path: &Option<PathBuf>, key: &str) -> Result<Images, CliError> {
    let p = required(path, key)?;
    ensure_store_exists(p)?;
    let (store, labels, manifest) = load_store(p)?;
    Ok(Images {
        store,
        labels,
        manifest,
    })
}

pub fn load_bank(cfg: &RunConfig) -> Result<PromptBank, CliError> {
    let p = required(&cfg.data.bank, "data.bank")?;
    ensure_store_exists(p)?;
    Ok(PromptBank::load(p)?)
}

/// Check that every configured input exists before a command starts.
pub fn ensure_inputs(cfg: &RunConfig) -> Result<(), CliError> {
    for p in [&cfg.data.train, &cfg.data.eval, &cfg.data.bank].into_iter().flatten() {
        ensure_store_exists(p)?;
    }
    if let Some(p) = &cfg.data.predictions {
        ensure_exists(p)?;
    }
    Ok(())
}

/// Writes report files into the configured output directory.
pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.output).map_err(|e| io_err(&cfg.output, e))?;
        let mut out = Self {
            dir: cfg.output.clone(),
        };
        out.text("config.toml", &cfg.to_toml())?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut body = serde_json::to_string_pretty(value).expect("report serializes");
        body.push('\n');
        self.text(name, &body)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

/// Accuracy as a percentage with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

pub fn opt_pct(x: Option<f64>) -> String {
    x.map(pct).unwrap_or_else(|| "-".to_string())
}

/// Plain-text table; the first column is left-aligned, the rest right.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        for (i, cell) in cells.enumerate().take(cols) {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                let _ = write!(out, "{cell:<w$}", w = width[i]);
            } else {
                let _ = write!(out, "{cell:>w$}", w = width[i]);
            }
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    };
    line(&mut out, &mut header.iter().copied());
    let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &mut rule.iter().map(String::as_str));
    for row in rows {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}
