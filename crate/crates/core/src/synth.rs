//! Seeded synthetic fixtures: random unit stores, Gaussian blobs on the
//! sphere, prompt banks around class centers, and a dataset on which the
//! language and vision classifiers are each reliable on one half of the
//! classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::store::{EmbeddingStore, LabelSet, PromptBank, Role};

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v = gaussian(rng, d);
    normalize(&mut v);
    v
}

/// `center + spread * z / sqrt(d)`, normalized.
fn perturbed(rng: &mut ChaCha8Rng, center: &[f64], spread: f64) -> Vec<f64> {
    let scale = spread / (center.len() as f64).sqrt();
    let mut v: Vec<f64> = center
        .iter()
        .map(|&c| c + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    normalize(&mut v);
    v
}

fn store(d: usize, rows: Vec<Vec<f64>>, prefix: &str, role: Role) -> EmbeddingStore {
    let data = rows.into_iter().flatten().map(|x| x as f32).collect();
    EmbeddingStore::with_numbered_ids(d, data, prefix, role).expect("consistent fixture shape")
}

/// `n` independent uniformly random unit rows.
pub fn random_unit_store(n: usize, d: usize, seed: u64, prefix: &str) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store(d, (0..n).map(|_| unit(&mut rng, d)).collect(), prefix, Role::Image)
}

fn centers(classes: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes).map(|_| unit(&mut rng, d)).collect()
}

/// Blobs around random unit centers; sample `i` has class `i % classes`.
pub fn gaussian_blobs(
    classes: usize,
    per_class: usize,
    d: usize,
    spread: f64,
    seed: u64,
    prefix: &str,
) -> (EmbeddingStore, LabelSet) {
    gaussian_blobs_with_centers(classes, per_class, d, spread, seed, seed ^ 0x5eed, prefix)
}

/// Like [`gaussian_blobs`] but with separate seeds for the centers and the
/// samples, so that two draws share their class centers.
pub fn gaussian_blobs_with_centers(
    classes: usize,
    per_class: usize,
    d: usize,
    spread: f64,
    center_seed: u64,
    sample_seed: u64,
    prefix: &str,
) -> (EmbeddingStore, LabelSet) {
    let centers = centers(classes, d, center_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let n = classes * per_class;
    let rows = (0..n)
        .map(|i| perturbed(&mut rng, &centers[i % classes], spread))
        .collect();
    let labels = LabelSet::from_single((0..n).map(|i| (i % classes) as u32).collect(), classes as u32);
    (store(d, rows, prefix, Role::Image), labels)
}

/// Bank of `templates` rows per class drawn uniformly at random.
pub fn random_bank(templates: usize, classes: usize, d: usize, seed: u64) -> PromptBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..templates * classes).map(|_| unit(&mut rng, d)).collect();
    let names = (0..templates).map(|t| format!("template {t} of a {{}}.")).collect();
    PromptBank::new(store(d, rows, "prompt", Role::Text), names, classes).expect("bank shape")
}

/// Train/eval blobs sharing centers plus a prompt bank whose rows are noisy
/// copies of the centers (last template is the bare class name).
#[derive(Clone, Debug)]
pub struct BlobFixture {
    pub train: EmbeddingStore,
    pub train_labels: LabelSet,
    pub eval: EmbeddingStore,
    pub eval_labels: LabelSet,
    pub bank: PromptBank,
}

pub fn blob_fixture(
    classes: usize,
    train_per_class: usize,
    eval_per_class: usize,
    d: usize,
    spread: f64,
    templates: usize,
    seed: u64,
) -> BlobFixture {
    let (train, train_labels) =
        gaussian_blobs_with_centers(classes, train_per_class, d, spread, seed, seed + 1, "train");
    let (eval, eval_labels) =
        gaussian_blobs_with_centers(classes, eval_per_class, d, spread, seed, seed + 2, "val");
    let cs = centers(classes, d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
    let rows = (0..templates * classes)
        .map(|r| perturbed(&mut rng, &cs[r % classes], spread))
        .collect();
    let mut names: Vec<String> = (1..templates).map(|t| format!("template {t} of a {{}}.")).collect();
    names.push("{}".to_string());
    let bank = PromptBank::new(store(d, rows, "prompt", Role::Text), names, classes).expect("bank shape");
    BlobFixture {
        train,
        train_labels,
        eval,
        eval_labels,
        bank,
    }
}

/// Dataset where zero-shot classification is reliable on classes
/// `0..language_classes` and k-NN on the rest.
///
/// Embeddings are `normalize(0.05 * a + b)` with `a` in the first half of the
/// dimensions (the only part the prompts live in) and `b` in the second.
/// Language-reliable classes get a clean per-class `a` and a `b` shared by a
/// group of about three classes; vision-reliable classes the reverse. Each
/// classifier's mistakes stay inside the confused group, so it never
/// predicts a class of its reliable half wrongly.
#[derive(Clone, Debug)]
pub struct ComplementaryFixture {
    pub train: EmbeddingStore,
    pub train_labels: LabelSet,
    pub eval: EmbeddingStore,
    pub eval_labels: LabelSet,
    pub bank: PromptBank,
}

pub fn complementary(
    classes: usize,
    language_classes: usize,
    train_per_class: usize,
    eval_per_class: usize,
    seed: u64,
) -> ComplementaryFixture {
    assert!(language_classes <= classes);
    let half = 64;
    let d = 2 * half;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_of = |c: usize| -> usize {
        let (base, size) = if c < language_classes {
            (0, language_classes)
        } else {
            (language_classes, classes - language_classes)
        };
        let groups = (size / 3).max(1);
        let g = ((c - base) / 3).min(groups - 1);
        if c < language_classes {
            g
        } else {
            1000 + g
        }
    };
    let group_ids: Vec<usize> = (0..classes).map(group_of).collect();
    let mut distinct = group_ids.clone();
    distinct.sort_unstable();
    distinct.dedup();

    // shared directions per confusion group, in both halves
    let group_a: Vec<Vec<f64>> = distinct.iter().map(|_| unit(&mut rng, half)).collect();
    let group_b: Vec<Vec<f64>> = distinct.iter().map(|_| unit(&mut rng, half)).collect();
    let gidx = |c: usize| distinct.binary_search(&group_ids[c]).unwrap();
    let class_a: Vec<Vec<f64>> = (0..classes).map(|_| unit(&mut rng, half)).collect();
    let class_b: Vec<Vec<f64>> = (0..classes).map(|_| unit(&mut rng, half)).collect();

    // prototypes: clean class directions for the language half; for the rest
    // the group direction plus an orthogonal per-class offset of equal norm
    let protos: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            if c < language_classes {
                class_a[c].clone()
            } else {
                let g = &group_a[gidx(c)];
                let v = &class_a[c];
                let along: f64 = v.iter().zip(g).map(|(x, y)| x * y).sum();
                let mut off: Vec<f64> = v.iter().zip(g).map(|(x, y)| x - along * y).collect();
                normalize(&mut off);
                let mut p: Vec<f64> = g.iter().zip(&off).map(|(x, y)| x + 0.5 * y).collect();
                normalize(&mut p);
                p
            }
        })
        .collect();

    let sample = |rng: &mut ChaCha8Rng, c: usize| -> Vec<f64> {
        let (a, b) = if c < language_classes {
            (
                perturbed(rng, &class_a[c], 0.05),
                perturbed(rng, &group_b[gidx(c)], 1.0),
            )
        } else {
            (
                perturbed(rng, &group_a[gidx(c)], 0.4),
                perturbed(rng, &class_b[c], 0.05),
            )
        };
        let mut v: Vec<f64> = a.iter().map(|x| 0.05 * x).chain(b).collect();
        normalize(&mut v);
        v
    };
    let draw = |rng: &mut ChaCha8Rng, per_class: usize, prefix: &str| {
        let n = classes * per_class;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| sample(rng, i % classes)).collect();
        let labels =
            LabelSet::from_single((0..n).map(|i| (i % classes) as u32).collect(), classes as u32);
        (store(d, rows, prefix, Role::Image), labels)
    };
    let (train, train_labels) = draw(&mut rng, train_per_class, "train");
    let (eval, eval_labels) = draw(&mut rng, eval_per_class, "val");

    let templates = ["itap of a {}.", "a photo of the large {}.", "{}"];
    let rows = (0..templates.len() * classes)
        .map(|r| {
            let mut p = perturbed(&mut rng, &protos[r % classes], 0.02);
            p.extend(std::iter::repeat(0.0).take(half));
            p
        })
        .collect();
    let bank = PromptBank::new(
        store(d, rows, "prompt", Role::Text),
        templates.iter().map(|t| t.to_string()).collect(),
        classes,
    )
    .expect("bank shape");
    ComplementaryFixture {
        train,
        train_labels,
        eval,
        eval_labels,
        bank,
    }
}
