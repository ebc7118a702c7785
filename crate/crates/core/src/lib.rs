//! Learning-free image classification over precomputed vision-language
//! embeddings: zero-shot prompt ensembles, exact k-NN in image space,
//! precision-based fusion of the two, and oracle / few-shot evaluation.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod knn;
pub mod predictions;
pub mod store;
pub mod synth;
pub mod zeroshot;

pub use error::{Error, FormatError, Result};
pub use eval::{EvalReport, GroundTruth};
pub use fusion::{FusionModel, PrecisionTable};
pub use knn::{classify_knn, top_k, KnnConfig, Neighbor, NeighborList, PairingPolicy};
pub use predictions::{PredictionSet, VariantFamily};
pub use store::{
    load_store, save_store, validate_store, DatasetManifest, Diagnostic, EmbeddingStore, LabelSet,
    NameSet, PromptBank, Role, Rows, Split,
};
pub use zeroshot::{build_prototypes, classify_zeroshot, ClassPrototypeMatrix, TemplateSelection};
