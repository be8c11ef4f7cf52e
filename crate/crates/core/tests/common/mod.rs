#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;

use qbe_core::corpus::{FeatureMatrix, Lexicon};
use qbe_core::encoder::{
    embed_batch, loss_and_gradients, Architecture, EmbeddingModel, Parameters, Pooling, SegmentRequest, Stage,
};
use qbe_core::objective::{batch_objective, batch_objective_with_gradients, EmbeddedBatch, MiningConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_lexicon() -> Lexicon {
    let entries: BTreeMap<String, Vec<String>> = [
        ("cat", "k ae t"),
        ("dog", "d ao g"),
        ("a", "ae"),
        ("go", "g ow"),
        ("tack", "t ae k"),
    ]
    .into_iter()
    .map(|(w, p)| (w.to_owned(), p.split(' ').map(str::to_owned).collect()))
    .collect();
    Lexicon::new(entries).unwrap()
}

pub fn word_arch(lexicon: &Lexicon, input_dim: usize, hidden: usize, layers: usize, pooling: Pooling) -> Architecture {
    Architecture {
        stage: Stage::Word,
        input_dim,
        hidden,
        word_layers: layers,
        span_layers: 0,
        pooling,
        dropout: 0.0,
        phone_dim: 3,
        phones: lexicon.phones().to_vec(),
    }
}

pub fn random_features(id: &str, frames: usize, dim: usize, rng: &mut impl Rng) -> FeatureMatrix {
    let data = (0..frames * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    FeatureMatrix::new(id, frames, dim, data).unwrap()
}

/// Batch of utterances, each with labelled segments; `labels` is the unique
/// label list and `label_of` maps every segment (flattened) into it.
pub struct TinyBatch {
    pub features: Vec<FeatureMatrix>,
    pub segments: Vec<Vec<(usize, usize)>>,
    pub labels: Vec<Vec<String>>,
    pub label_of: Vec<usize>,
}

impl TinyBatch {
    pub fn requests(&self) -> Vec<SegmentRequest<'_>> {
        self.features
            .iter()
            .zip(&self.segments)
            .map(|(f, s)| SegmentRequest {
                features: f,
                segments: s.clone(),
                dropout_seed: None,
            })
            .collect()
    }
}

/// Three utterances of at most six frames with two words each.
pub fn tiny_batch(seed: u64, dim: usize) -> TinyBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ["cat", "dog", "a", "go", "tack"];
    let mut features = Vec::new();
    let mut segments = Vec::new();
    let mut words = Vec::new();
    for u in 0..3 {
        let frames = rng.gen_range(4..=6);
        features.push(random_features(&format!("u{u}"), frames, dim, &mut rng));
        let split = rng.gen_range(1..frames - 1);
        segments.push(vec![(0, split), (split + 1, frames - 1)]);
        for _ in 0..2 {
            words.push(vocab[rng.gen_range(0..vocab.len())].to_owned());
        }
    }
    // guarantee at least two distinct labels
    if words.iter().all(|w| *w == words[0]) {
        words[1] = if words[0] == "cat" { "dog" } else { "cat" }.to_owned();
    }
    let mut labels: Vec<Vec<String>> = Vec::new();
    let mut label_of = Vec::new();
    for w in words {
        let key = vec![w];
        let idx = match labels.iter().position(|l| *l == key) {
            Some(i) => i,
            None => {
                labels.push(key);
                labels.len() - 1
            }
        };
        label_of.push(idx);
    }
    TinyBatch {
        features,
        segments,
        labels,
        label_of,
    }
}

pub fn objective_value(model: &EmbeddingModel, batch: &TinyBatch, lexicon: &Lexicon, cfg: &MiningConfig) -> f64 {
    let emb = embed_batch(model, &batch.requests(), &batch.labels, lexicon).unwrap();
    batch_objective(
        &EmbeddedBatch {
            acoustic: &emb.acoustic,
            labels: &batch.label_of,
            written: &emb.written,
        },
        cfg,
    )
    .unwrap()
}

pub fn analytic_gradients(
    model: &EmbeddingModel,
    batch: &TinyBatch,
    lexicon: &Lexicon,
    cfg: &MiningConfig,
) -> (f64, EmbeddingModel) {
    loss_and_gradients(model, &batch.requests(), &batch.labels, lexicon, |emb| {
        batch_objective_with_gradients(
            &EmbeddedBatch {
                acoustic: &emb.acoustic,
                labels: &batch.label_of,
                written: &emb.written,
            },
            cfg,
        )
    })
    .unwrap()
}

pub struct GradCheck {
    pub loss: f64,
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Floor on the denominator of the relative error, so that parameters
/// with vanishing gradient are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;

/// Central finite differences over every trainable parameter.
pub fn gradient_check(model: &EmbeddingModel, batch: &TinyBatch, lexicon: &Lexicon, cfg: &MiningConfig, step: f64) -> GradCheck {
    let (loss, grads) = analytic_gradients(model, batch, lexicon, cfg);
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let mut probe = model.clone();
    let mut max_rel_error: f64 = 0.0;
    let mut worst = String::new();
    let mut checked = 0;
    for (ti, (name, a)) in analytic.iter().enumerate() {
        if !model.is_trainable(name) {
            continue;
        }
        for i in 0..a.len() {
            let orig = probe.named_tensors()[ti].1.data()[i];
            probe.named_tensors_mut()[ti].1.data_mut()[i] = orig + step;
            let up = objective_value(&probe, batch, lexicon, cfg);
            probe.named_tensors_mut()[ti].1.data_mut()[i] = orig - step;
            let down = objective_value(&probe, batch, lexicon, cfg);
            probe.named_tensors_mut()[ti].1.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let rel = (numeric - a[i]).abs() / numeric.abs().max(a[i].abs()).max(REL_FLOOR);
            if rel > max_rel_error {
                max_rel_error = rel;
                worst = format!("{name}[{i}] analytic {} numeric {numeric}", a[i]);
            }
            checked += 1;
        }
    }
    GradCheck {
        loss,
        max_rel_error,
        worst,
        checked,
    }
}
