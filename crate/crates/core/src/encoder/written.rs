//! Written-view encoders: phone sequences for words, word sequences for spans.

use rand::Rng;

use super::gru::{BiGru, BiGruTrace};
use super::pooling::{pool, pool_backward, Pooling};
use super::tensor::{join, Parameters, Tensor};
use crate::corpus::Lexicon;
use crate::error::{Error, Result};

/// Phone embedding table followed by one bidirectional GRU, concat-pooled
/// over the whole pronunciation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneEncoder {
    phones: Vec<String>,
    table: Tensor,
    rnn: BiGru,
}

#[derive(Debug, Clone)]
pub struct PhoneTrace {
    phone_ids: Vec<usize>,
    inputs: Vec<f64>,
    rnn: BiGruTrace,
}

impl PhoneEncoder {
    pub fn zeros(phones: Vec<String>, phone_dim: usize, hidden: usize) -> Self {
        let table = Tensor::zeros(&[phones.len(), phone_dim]);
        Self {
            phones,
            table,
            rnn: BiGru::zeros(phone_dim, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(phones: Vec<String>, phone_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let table = Tensor::uniform(&[phones.len(), phone_dim], 1.0 / (phone_dim as f64).sqrt(), rng);
        let rnn = BiGru::init(phone_dim, hidden, rng);
        Self { phones, table, rnn }
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn output_dim(&self) -> usize {
        2 * self.rnn.hidden()
    }

    fn phone_ids(&self, lexicon: &Lexicon, word: &str) -> Result<Vec<usize>> {
        let pron = lexicon
            .pronunciation(word)
            .ok_or_else(|| Error::UnknownWord(word.to_owned()))?;
        pron.iter()
            .map(|p| {
                self.phones
                    .iter()
                    .position(|q| q == p)
                    .ok_or_else(|| Error::UnknownPhone(p.clone()))
            })
            .collect()
    }

    pub fn forward(&self, lexicon: &Lexicon, word: &str) -> Result<(Vec<f64>, PhoneTrace)> {
        let phone_ids = self.phone_ids(lexicon, word)?;
        let e = self.table.dims()[1];
        let mut inputs = Vec::with_capacity(phone_ids.len() * e);
        for &p in &phone_ids {
            inputs.extend_from_slice(&self.table.data()[p * e..(p + 1) * e]);
        }
        let rnn = self.rnn.forward(&inputs, phone_ids.len());
        let emb = pool(&rnn.output, self.output_dim(), 0, phone_ids.len() - 1, Pooling::Concat)?;
        Ok((
            emb,
            PhoneTrace {
                phone_ids,
                inputs,
                rnn,
            },
        ))
    }

    pub fn embed(&self, lexicon: &Lexicon, word: &str) -> Result<Vec<f64>> {
        Ok(self.forward(lexicon, word)?.0)
    }

    pub fn backward(&self, trace: &PhoneTrace, d_emb: &[f64], grad: &mut PhoneEncoder) {
        let steps = trace.phone_ids.len();
        let dim = self.output_dim();
        let mut d_out = vec![0.0; steps * dim];
        pool_backward(d_emb, &mut d_out, dim, 0, steps - 1, Pooling::Concat);
        let dx = self
            .rnn
            .backward(&trace.inputs, &trace.rnn, &d_out, &mut grad.rnn, true)
            .expect("input gradient requested");
        let e = self.table.dims()[1];
        let table = grad.table.data_mut();
        for (t, &p) in trace.phone_ids.iter().enumerate() {
            for k in 0..e {
                table[p * e + k] += dx[t * e + k];
            }
        }
    }
}

impl Parameters for PhoneEncoder {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "table"), &self.table));
        self.rnn.tensors(&join(prefix, "rnn"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "table"), &mut self.table));
        self.rnn.tensors_mut(&join(prefix, "rnn"), out);
    }
}

/// Bidirectional GRU over per-word embeddings from a (frozen) phone encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanEncoder {
    rnn: BiGru,
}

#[derive(Debug, Clone)]
pub struct SpanTrace {
    inputs: Vec<f64>,
    steps: usize,
    rnn: BiGruTrace,
}

impl SpanEncoder {
    pub fn zeros(word_dim: usize, hidden: usize) -> Self {
        Self {
            rnn: BiGru::zeros(word_dim, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(word_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            rnn: BiGru::init(word_dim, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.rnn.hidden()
    }

    pub fn forward(&self, words: &PhoneEncoder, lexicon: &Lexicon, labels: &[String]) -> Result<(Vec<f64>, SpanTrace)> {
        if labels.is_empty() {
            return Err(Error::Config("empty label sequence".into()));
        }
        let mut inputs = Vec::with_capacity(labels.len() * words.output_dim());
        for w in labels {
            inputs.extend(words.embed(lexicon, w)?);
        }
        let rnn = self.rnn.forward(&inputs, labels.len());
        let emb = pool(&rnn.output, self.output_dim(), 0, labels.len() - 1, Pooling::Concat)?;
        Ok((
            emb,
            SpanTrace {
                inputs,
                steps: labels.len(),
                rnn,
            },
        ))
    }

    pub fn backward(&self, trace: &SpanTrace, d_emb: &[f64], grad: &mut SpanEncoder) {
        let dim = self.output_dim();
        let mut d_out = vec![0.0; trace.steps * dim];
        pool_backward(d_emb, &mut d_out, dim, 0, trace.steps - 1, Pooling::Concat);
        self.rnn.backward(&trace.inputs, &trace.rnn, &d_out, &mut grad.rnn, false);
    }
}

impl Parameters for SpanEncoder {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.rnn.tensors(&join(prefix, "rnn"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.rnn.tensors_mut(&join(prefix, "rnn"), out);
    }
}
