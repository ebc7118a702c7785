use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use embclass::eval::{OracleLevel, DEFAULT_M_GRID, DEFAULT_TRIAL_BUDGET};
use embclass::knn::DEFAULT_K_GRID;
use embclass::TemplateSelection;

use crate::error::CliError;

pub const THREADS_ENV: &str = "EMBCLASS_THREADS";

fn default_seed() -> u64 {
    42
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_k_grid() -> Vec<usize> {
    DEFAULT_K_GRID.to_vec()
}

fn default_templates() -> String {
    "avg".to_string()
}

fn yes() -> bool {
    true
}

/// Everything one run needs. Every command-line flag is an override of a key
/// in here, so an archived config reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 0 means one thread per hardware thread.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub fuse: FuseConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub fewshot: FewShotSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Reference images (the training split).
    pub train: Option<PathBuf>,
    /// Images to classify (the validation split).
    pub eval: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    /// `sample_id,class_id` CSV for `eval.classifier = "import"`.
    pub predictions: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    Knn,
    Zeroshot,
    PromptKnn,
    Import,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub classifier: Classifier,
    pub k: usize,
    pub templates: String,
    /// Skip reference rows whose sample id equals the query's.
    pub self_exclude: bool,
    /// Also score against the manifest's multi-label sets when present.
    pub real: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            classifier: Classifier::Knn,
            k: 9,
            templates: default_templates(),
            self_exclude: false,
            real: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    /// Also classify the training split against the eval split.
    #[serde(default = "yes")]
    pub swapped: bool,
    #[serde(default)]
    pub self_exclude: bool,
    #[serde(default = "five")]
    pub shift_top_n: usize,
}

fn five() -> usize {
    5
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_grid: default_k_grid(),
            swapped: true,
            self_exclude: false,
            shift_top_n: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseConfig {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "ten")]
    pub folds: usize,
    #[serde(default = "default_templates")]
    pub templates: String,
}

fn ten() -> usize {
    10
}

impl Default for FuseConfig {
    fn default() -> Self {
        Self {
            k_grid: default_k_grid(),
            folds: 10,
            templates: default_templates(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// One zero-shot member per template of the bank.
    Templates,
    /// One k-NN member per k of the grid.
    Knn,
    /// Union of the two.
    Double,
    /// Prediction files listed in `imports`.
    Import,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "double")]
    pub family: FamilyKind,
    /// Both levels when absent.
    #[serde(default)]
    pub level: Option<OracleLevel>,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub imports: Vec<PathBuf>,
}

fn double() -> FamilyKind {
    FamilyKind::Double
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Double,
            level: None,
            k_grid: default_k_grid(),
            imports: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotSection {
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    #[serde(default = "default_fewshot_k")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_budget")]
    pub trial_budget: usize,
    /// Same number of trials for every m; overrides the budget.
    #[serde(default)]
    pub trials: Option<usize>,
    /// Add a column classified against the full training split.
    #[serde(default = "yes")]
    pub all_images: bool,
}

fn default_m_grid() -> Vec<usize> {
    DEFAULT_M_GRID.to_vec()
}

fn default_fewshot_k() -> Vec<usize> {
    vec![1, 5, 7, 9, 11, 21, 51]
}

fn default_budget() -> usize {
    DEFAULT_TRIAL_BUDGET
}

impl Default for FewShotSection {
    fn default() -> Self {
        Self {
            m_grid: default_m_grid(),
            k_grid: default_fewshot_k(),
            trial_budget: DEFAULT_TRIAL_BUDGET,
            trials: None,
            all_images: true,
        }
    }
}

impl RunConfig {
    /// Read `path` (when given), apply `section.key=value` overrides in
    /// order, and check the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                let mut t: Table = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                // relative data paths resolve against the config file
                if let Some(dir) = p.parent() {
                    rebase_paths(&mut t, dir);
                }
                t
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        self.templates()?;
        self.fuse_templates()?;
        let grids = [
            ("sweep.k_grid", &self.sweep.k_grid),
            ("fuse.k_grid", &self.fuse.k_grid),
            ("oracle.k_grid", &self.oracle.k_grid),
            ("fewshot.k_grid", &self.fewshot.k_grid),
            ("fewshot.m_grid", &self.fewshot.m_grid),
        ];
        for (key, grid) in grids {
            if grid.is_empty() || grid.contains(&0) {
                return Err(CliError::Config(format!("{key} needs positive entries")));
            }
        }
        if self.eval.k == 0 {
            return Err(CliError::Config("eval.k must be at least 1".into()));
        }
        if self.fuse.folds < 2 {
            return Err(CliError::Config("fuse.folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<TemplateSelection, CliError> {
        self.eval
            .templates
            .parse()
            .map_err(|e| CliError::Config(format!("eval.templates: {e}")))
    }

    pub fn fuse_templates(&self) -> Result<TemplateSelection, CliError> {
        self.fuse
            .templates
            .parse()
            .map_err(|e| CliError::Config(format!("fuse.templates: {e}")))
    }

    /// `threads` key, unless the environment overrides it.
    pub fn thread_count(&self) -> Result<usize, CliError> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a count"))),
            Err(_) => Ok(self.threads),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

const PATH_KEYS: [&str; 4] = ["train", "eval", "bank", "predictions"];

fn rebase_paths(table: &mut Table, dir: &Path) {
    let rebase = |v: &mut Value| {
        if let Value::String(s) = v {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = dir.join(p).to_string_lossy().into_owned();
            }
        }
    };
    if let Some(v) = table.get_mut("output") {
        rebase(v);
    }
    if let Some(Value::Table(data)) = table.get_mut("data") {
        for key in PATH_KEYS {
            if let Some(v) = data.get_mut(key) {
                rebase(v);
            }
        }
    }
    if let Some(Value::Table(oracle)) = table.get_mut("oracle") {
        if let Some(Value::Array(items)) = oracle.get_mut("imports") {
            items.iter_mut().for_each(rebase);
        }
    }
}

/// `a.b=value`: the value is read as a TOML literal, falling back to a bare
/// string, so `k=7`, `k_grid=[1,3]` and `bank=prompts.emb` all work.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("{key}: {part} is not a section"))),
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
