//! Shared inputs for the benchmarks.

use embclass::synth::{blob_fixture, random_unit_store, BlobFixture};
use embclass::EmbeddingStore;

/// Query and reference stores of unit rows.
pub fn search_inputs(queries: usize, refs: usize, d: usize) -> (EmbeddingStore, EmbeddingStore) {
    (
        random_unit_store(queries, d, 1, "q"),
        random_unit_store(refs, d, 2, "r"),
    )
}

/// 100 classes, 50 train and 10 eval images per class, 7 templates.
pub fn classification_inputs(d: usize) -> BlobFixture {
    blob_fixture(100, 50, 10, d, 1.2, 7, 42)
}
