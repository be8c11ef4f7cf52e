//! Batched forward passes and exact reverse-mode gradients for a scalar loss
//! defined on acoustic and written embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::EmbeddingModel;
use super::pooling::pool_backward;
use super::stack::{RecurrentStack, StackTrace};
use super::tensor::Parameters;
use super::written::{PhoneTrace, SpanTrace};
use crate::corpus::{FeatureMatrix, Lexicon};
use crate::error::Result;

/// Items per gradient-reduction chunk. Fixed so that the summation order, and
/// therefore the result, does not depend on the thread count.
const REDUCE_CHUNK: usize = 4;

/// Segments `(start, end)` of one utterance, with an optional dropout seed
/// (training mode when present).
#[derive(Debug, Clone)]
pub struct SegmentRequest<'a> {
    pub features: &'a FeatureMatrix,
    pub segments: Vec<(usize, usize)>,
    pub dropout_seed: Option<u64>,
}

/// Loss value and its gradient with respect to every embedding.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingGradients {
    pub loss: f64,
    pub d_acoustic: Vec<Vec<f64>>,
    pub d_written: Vec<Vec<f64>>,
}

/// Acoustic embeddings (flattened in request/segment order) and written
/// embeddings (one per label sequence).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEmbeddings {
    pub acoustic: Vec<Vec<f64>>,
    pub written: Vec<Vec<f64>>,
}

enum WrittenTrace {
    Word(PhoneTrace),
    Span(SpanTrace),
}

struct AcousticForward {
    trace: StackTrace,
    embeddings: Vec<Vec<f64>>,
}

fn acoustic_forward(model: &EmbeddingModel, req: &SegmentRequest<'_>) -> Result<AcousticForward> {
    let trace = match req.dropout_seed {
        Some(seed) => model.forward_trace(req.features, Some(&mut ChaCha8Rng::seed_from_u64(seed)))?,
        None => model.forward_trace::<ChaCha8Rng>(req.features, None)?,
    };
    let dim = model.embedding_dim();
    let embeddings = req
        .segments
        .iter()
        .map(|&(s, e)| super::pooling::pool(trace.states(), dim, s, e, model.pooling()))
        .collect::<Result<Vec<_>>>()?;
    Ok(AcousticForward { trace, embeddings })
}

fn written_forward(model: &EmbeddingModel, lexicon: &Lexicon, labels: &[String]) -> Result<(Vec<f64>, WrittenTrace)> {
    match &model.spans {
        None => {
            let [word] = labels else {
                return Err(crate::Error::Config(format!(
                    "word-stage written view embeds single words, got {} labels",
                    labels.len()
                )));
            };
            let (emb, tr) = model.words.forward(lexicon, word)?;
            Ok((emb, WrittenTrace::Word(tr)))
        }
        Some(spans) => {
            let (emb, tr) = spans.forward(&model.words, lexicon, labels)?;
            Ok((emb, WrittenTrace::Span(tr)))
        }
    }
}

/// Forward pass only.
pub fn embed_batch(
    model: &EmbeddingModel,
    requests: &[SegmentRequest<'_>],
    labels: &[Vec<String>],
    lexicon: &Lexicon,
) -> Result<BatchEmbeddings> {
    let acoustic: Vec<Vec<Vec<f64>>> = requests
        .par_iter()
        .map(|r| acoustic_forward(model, r).map(|f| f.embeddings))
        .collect::<Result<_>>()?;
    let written = labels
        .par_iter()
        .map(|l| written_forward(model, lexicon, l).map(|(e, _)| e))
        .collect::<Result<_>>()?;
    Ok(BatchEmbeddings {
        acoustic: acoustic.into_iter().flatten().collect(),
        written,
    })
}

/// Evaluates `loss` on the batch embeddings and backpropagates its embedding
/// gradients into every trainable parameter. Returns the loss and a gradient
/// accumulator shaped like `model` (frozen tensors stay zero).
pub fn loss_and_gradients<F>(
    model: &EmbeddingModel,
    requests: &[SegmentRequest<'_>],
    labels: &[Vec<String>],
    lexicon: &Lexicon,
    loss: F,
) -> Result<(f64, EmbeddingModel)>
where
    F: FnOnce(&BatchEmbeddings) -> Result<EmbeddingGradients>,
{
    let acoustic: Vec<AcousticForward> = requests
        .par_iter()
        .map(|r| acoustic_forward(model, r))
        .collect::<Result<_>>()?;
    let written: Vec<(Vec<f64>, WrittenTrace)> = labels
        .par_iter()
        .map(|l| written_forward(model, lexicon, l))
        .collect::<Result<_>>()?;

    let embeddings = BatchEmbeddings {
        acoustic: acoustic.iter().flat_map(|f| f.embeddings.iter().cloned()).collect(),
        written: written.iter().map(|(e, _)| e.clone()).collect(),
    };
    let grads = loss(&embeddings)?;

    let mut offsets = Vec::with_capacity(requests.len());
    let mut offset = 0;
    for r in requests {
        offsets.push(offset);
        offset += r.segments.len();
    }

    let frozen = model.frozen_prefix();
    let dim = model.embedding_dim();
    let zero_stack = || {
        let mut g = model.acoustic.clone();
        for (_, t) in g.named_tensors_mut() {
            t.fill(0.0);
        }
        g
    };
    let chunk_grads: Vec<RecurrentStack> = (0..requests.len())
        .collect::<Vec<_>>()
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut g = zero_stack();
            for &i in chunk {
                let req = &requests[i];
                let fwd = &acoustic[i];
                let mut d_states = vec![0.0; fwd.trace.steps() * dim];
                let mut any = false;
                for (k, &(s, e)) in req.segments.iter().enumerate() {
                    let d = &grads.d_acoustic[offsets[i] + k];
                    if d.iter().any(|&v| v != 0.0) {
                        any = true;
                        pool_backward(d, &mut d_states, dim, s, e, model.pooling());
                    }
                }
                if any {
                    model.acoustic.backward(&fwd.trace, &d_states, &mut g, frozen);
                }
            }
            g
        })
        .collect();

    let mut total = model.zeros_like();
    for g in &chunk_grads {
        for ((_, acc), (_, part)) in total.acoustic.named_tensors_mut().into_iter().zip(g.named_tensors()) {
            acc.add_assign(part);
        }
    }
    for ((_, trace), d) in written.iter().zip(&grads.d_written) {
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        match trace {
            WrittenTrace::Word(tr) => model.words.backward(tr, d, &mut total.words),
            WrittenTrace::Span(tr) => {
                let spans = model.spans.as_ref().expect("span trace implies span encoder");
                spans.backward(tr, d, total.spans.as_mut().expect("gradient mirrors model"));
            }
        }
    }
    Ok((grads.loss, total))
}
