use std::path::PathBuf;

use clap::{Args, ValueEnum};

use embclass::synth::{blob_fixture, complementary};
use embclass::{save_store, DatasetManifest, EmbeddingStore, LabelSet, PromptBank, Split};

use crate::error::{io_err, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Gaussian blobs around shared class centers.
    Blobs,
    /// Half the classes separable by prompts, the other half by images.
    Complementary,
}

/// Write a synthetic train/eval/bank triple plus a `run.toml` for it.
#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: Kind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub eval_per_class: usize,
    /// Blobs only.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Blobs only: noise norm around each center.
    #[arg(long, default_value_t = 1.5)]
    pub spread: f64,
    /// Blobs only.
    #[arg(long, default_value_t = 3)]
    pub templates: usize,
    /// Complementary only; defaults to half the classes.
    #[arg(long)]
    pub language_classes: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Leave the cleaner mask and multi-label sets out of the eval manifest.
    #[arg(long)]
    pub no_cleaner: bool,
}

/// Every fourth eval row is dropped from the cleaner subset; every fifth
/// kept row also accepts the next class.
fn with_cleaner(mut m: DatasetManifest, labels: &LabelSet) -> DatasetManifest {
    let c = labels.class_count();
    let mask: Vec<bool> = (0..labels.len()).map(|i| i % 4 != 3).collect();
    let sets = (0..labels.len())
        .filter(|&i| mask[i])
        .enumerate()
        .map(|(j, i)| {
            let p = labels.primary(i);
            if j % 5 == 4 && c > 1 {
                vec![p, (p + 1) % c]
            } else {
                vec![p]
            }
        })
        .collect();
    m.cleaner_mask = Some(mask);
    m.multi_labels = Some(sets);
    m
}

pub fn run(args: &SynthArgs) -> Result<i32, CliError> {
    let (train, train_labels, eval, eval_labels, bank): (
        EmbeddingStore,
        LabelSet,
        EmbeddingStore,
        LabelSet,
        PromptBank,
    ) = match args.kind {
        Kind::Blobs => {
            let f = blob_fixture(
                args.classes,
                args.train_per_class,
                args.eval_per_class,
                args.dim,
                args.spread,
                args.templates,
                args.seed,
            );
            (f.train, f.train_labels, f.eval, f.eval_labels, f.bank)
        }
        Kind::Complementary => {
            let lc = args.language_classes.unwrap_or(args.classes / 2);
            if lc > args.classes {
                return Err(CliError::Config("--language-classes exceeds --classes".into()));
            }
            let f = complementary(args.classes, lc, args.train_per_class, args.eval_per_class, args.seed);
            (f.train, f.train_labels, f.eval, f.eval_labels, f.bank)
        }
    };
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let c = args.classes as u32;
    let tag = |mut m: DatasetManifest| {
        m.model = "synthetic".into();
        m.backbone = format!("{:?}", args.kind).to_lowercase();
        m.provenance.insert("seed".into(), args.seed.to_string());
        m
    };
    let train_manifest = tag(DatasetManifest::new(c).with_split(Split::Train));
    let mut eval_manifest = tag(DatasetManifest::new(c).with_split(Split::Validation));
    if !args.no_cleaner {
        eval_manifest = with_cleaner(eval_manifest, &eval_labels);
    }
    save_store(&train, &train_labels, &train_manifest, &args.out.join("train.emb"))?;
    save_store(&eval, &eval_labels, &eval_manifest, &args.out.join("val.emb"))?;
    save_store(bank.store(), bank.labels(), &tag(bank.to_manifest()), &args.out.join("bank.emb"))?;
    let run = "output = \"out\"\n\n[data]\ntrain = \"train.emb\"\neval = \"val.emb\"\nbank = \"bank.emb\"\n";
    let path = args.out.join("run.toml");
    std::fs::write(&path, run).map_err(|e| io_err(&path, e))?;
    println!("wrote {}", args.out.display());
    Ok(0)
}
