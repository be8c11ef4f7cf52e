use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pooling::{pool, Pooling};
use super::stack::{RecurrentStack, StackTrace};
use super::tensor::{Parameters, Tensor};
use super::written::{PhoneEncoder, SpanEncoder};
use crate::corpus::{FeatureMatrix, Lexicon};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Acoustic word embeddings with a phone-level written view.
    Word,
    /// Acoustic span embeddings on top of a frozen word-level model.
    Span,
}

/// Shape and mode metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub stage: Stage,
    pub input_dim: usize,
    /// Hidden units per direction per layer.
    pub hidden: usize,
    /// Acoustic layers of the word-level stack.
    pub word_layers: usize,
    /// Acoustic layers added on top for the span stage.
    pub span_layers: usize,
    pub pooling: Pooling,
    pub dropout: f64,
    pub phone_dim: usize,
    pub phones: Vec<String>,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Architecture(m.to_owned()));
        if self.input_dim == 0 || self.hidden == 0 || self.phone_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.word_layers == 0 {
            return bad("the word-level stack needs at least one layer");
        }
        match self.stage {
            Stage::Word if self.span_layers != 0 => return bad("word stage has no added span layers"),
            Stage::Span if self.span_layers == 0 => return bad("span stage needs at least one added layer"),
            _ => {}
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if self.phones.is_empty() {
            return bad("empty phone inventory");
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.word_layers + self.span_layers
    }

    /// Bottom layers that are not trained.
    pub fn frozen_prefix(&self) -> usize {
        match self.stage {
            Stage::Word => 0,
            Stage::Span => self.word_layers,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden
    }
}

/// Encoder output for one utterance: `[steps, dim]` with `[forward ; backward]` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub steps: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl StateMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn pool(&self, start: usize, end: usize, mode: Pooling) -> Result<Vec<f64>> {
        pool(&self.data, self.dim, start, end, mode)
    }

    /// Rows `start..=end` as a frame sequence.
    pub fn frames(&self, start: usize, end: usize) -> Vec<Vec<f64>> {
        (start..=end).map(|t| self.row(t).to_vec()).collect()
    }
}

pub(crate) fn features_to_f64(x: &FeatureMatrix) -> Vec<f64> {
    x.data().iter().map(|&v| v as f64).collect()
}

/// Acoustic-view encoder and pooling (`f`) together with the written view
/// (`g`): a phone encoder for words, plus a span encoder on top of it for the
/// span stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    arch: Architecture,
    pub(crate) acoustic: RecurrentStack,
    pub(crate) words: PhoneEncoder,
    pub(crate) spans: Option<SpanEncoder>,
}

impl EmbeddingModel {
    /// All-zero parameters; also serves as a gradient accumulator.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let acoustic = RecurrentStack::zeros(arch.input_dim, arch.hidden, arch.num_layers(), arch.dropout);
        let words = PhoneEncoder::zeros(arch.phones.clone(), arch.phone_dim, arch.hidden);
        let spans = (arch.stage == Stage::Span).then(|| SpanEncoder::zeros(2 * arch.hidden, arch.hidden));
        Ok(Self {
            arch,
            acoustic,
            words,
            spans,
        })
    }

    /// Randomly initialized word-stage model.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        if arch.stage != Stage::Word {
            return Err(Error::Architecture(
                "span models are built from a trained word model".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let acoustic = RecurrentStack::init(arch.input_dim, arch.hidden, arch.word_layers, arch.dropout, &mut rng);
        let words = PhoneEncoder::init(arch.phones.clone(), arch.phone_dim, arch.hidden, &mut rng);
        Ok(Self {
            arch,
            acoustic,
            words,
            spans: None,
        })
    }

    /// Span-stage model whose bottom acoustic layers and word-level written
    /// encoder are copies of `word`; `span_layers` new layers go on top.
    pub fn span_from_word(word: &EmbeddingModel, span_layers: usize, seed: u64) -> Result<Self> {
        if word.arch.stage != Stage::Word {
            return Err(Error::Architecture("span stage must start from a word-stage model".into()));
        }
        let arch = Architecture {
            stage: Stage::Span,
            span_layers,
            ..word.arch.clone()
        };
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acoustic = word.acoustic.clone();
        acoustic.extend(span_layers, &mut rng);
        let spans = SpanEncoder::init(2 * arch.hidden, arch.hidden, &mut rng);
        Ok(Self {
            arch,
            acoustic,
            words: word.words.clone(),
            spans: Some(spans),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn stage(&self) -> Stage {
        self.arch.stage
    }

    pub fn pooling(&self) -> Pooling {
        self.arch.pooling
    }

    pub fn set_pooling(&mut self, pooling: Pooling) {
        self.arch.pooling = pooling;
    }

    pub fn set_dropout(&mut self, rate: f64) {
        self.arch.dropout = rate;
        self.acoustic.set_dropout(rate);
    }

    pub fn embedding_dim(&self) -> usize {
        self.arch.embedding_dim()
    }

    pub fn frozen_prefix(&self) -> usize {
        self.arch.frozen_prefix()
    }

    pub fn acoustic_stack(&self) -> &RecurrentStack {
        &self.acoustic
    }

    pub fn phone_encoder(&self) -> &PhoneEncoder {
        &self.words
    }

    /// Whether the named tensor receives gradient updates.
    pub fn is_trainable(&self, name: &str) -> bool {
        match self.arch.stage {
            Stage::Word => true,
            Stage::Span => {
                if name.starts_with("words.") {
                    return false;
                }
                match layer_index(name) {
                    Some(l) => l >= self.arch.word_layers,
                    None => true,
                }
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.named_tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        if x.dim() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_trace<R: Rng + ?Sized>(&self, x: &FeatureMatrix, dropout_rng: Option<&mut R>) -> Result<StackTrace> {
        self.check_input(x)?;
        Ok(self.acoustic.forward(&features_to_f64(x), x.frames(), dropout_rng))
    }

    /// Per-frame states of the full acoustic stack in evaluation mode.
    pub fn encode_utterance(&self, x: &FeatureMatrix) -> Result<StateMatrix> {
        let trace = self.forward_trace::<ChaCha8Rng>(x, None)?;
        Ok(self.to_states(&trace))
    }

    /// Training-mode forward pass: dropout between layers driven by `rng`.
    pub fn encode_utterance_train<R: Rng + ?Sized>(&self, x: &FeatureMatrix, rng: &mut R) -> Result<StateMatrix> {
        let trace = self.forward_trace(x, Some(rng))?;
        Ok(self.to_states(&trace))
    }

    fn to_states(&self, trace: &StackTrace) -> StateMatrix {
        StateMatrix {
            steps: trace.steps(),
            dim: self.embedding_dim(),
            data: trace.states().to_vec(),
        }
    }

    /// Contextual embedding of frames `start..=end`: the whole utterance is
    /// encoded, then pooled over the window.
    pub fn embed_segment(&self, x: &FeatureMatrix, start: usize, end: usize) -> Result<Vec<f64>> {
        self.encode_utterance(x)?.pool(start, end, self.arch.pooling)
    }

    /// Embedding of a whole matrix (e.g. a spoken query).
    pub fn embed_whole(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.embed_segment(x, 0, x.frames() - 1)
    }

    /// Written-view embedding of a label sequence: exactly one word for the
    /// word stage, one or more words for the span stage.
    pub fn embed_label_sequence(&self, lexicon: &Lexicon, labels: &[String]) -> Result<Vec<f64>> {
        match &self.spans {
            None => match labels {
                [word] => self.words.embed(lexicon, word),
                _ => Err(Error::Config(format!(
                    "word-stage written view embeds single words, got {} labels",
                    labels.len()
                ))),
            },
            Some(spans) => Ok(spans.forward(&self.words, lexicon, labels)?.0),
        }
    }
}

fn layer_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("acoustic.layer")?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

impl Parameters for EmbeddingModel {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.acoustic.tensors(&super::tensor::join(prefix, "acoustic"), out);
        self.words.tensors(&super::tensor::join(prefix, "words"), out);
        if let Some(spans) = &self.spans {
            spans.tensors(&super::tensor::join(prefix, "spans"), out);
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.acoustic.tensors_mut(&super::tensor::join(prefix, "acoustic"), out);
        self.words.tensors_mut(&super::tensor::join(prefix, "words"), out);
        if let Some(spans) = &mut self.spans {
            spans.tensors_mut(&super::tensor::join(prefix, "spans"), out);
        }
    }
}
