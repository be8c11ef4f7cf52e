//! Run configuration: a TOML file merged with `--set section.key=value`
//! overrides. Unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qbe_core::augment::AugmentPolicy;
use qbe_core::dtw::{DtwConfig, DtwFeatures};
use qbe_core::encoder::Pooling;
use qbe_core::eval::DEFAULT_BETA;
use qbe_core::objective::{DEFAULT_K_END, DEFAULT_K_START, DEFAULT_MARGIN};
use qbe_core::search::{default_sizes, LengthBand, SearchConfig, WindowLattice, DEFAULT_FLOOR};
use qbe_core::synth::SynthConfig;
use qbe_core::training::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub augment: AugmentSection,
    pub spans: SpanSection,
    pub search: SearchSection,
    pub dtw: DtwSection,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub word_layers: usize,
    pub span_layers: usize,
    pub pooling: Pooling,
    pub dropout: f64,
    pub phone_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            hidden: m.hidden,
            word_layers: m.word_layers,
            span_layers: m.span_layers,
            pooling: m.pooling,
            dropout: m.dropout,
            phone_dim: m.phone_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub margin: f64,
    pub k_start: usize,
    pub k_end: usize,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            k_start: DEFAULT_K_START,
            k_end: DEFAULT_K_END,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub frame_budget: usize,
    pub epochs: usize,
    /// Fixed number of updates; overrides `epochs`.
    pub steps: Option<usize>,
    pub eval_every: usize,
    /// 0 uses every dev token.
    pub dev_tokens: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            frame_budget: t.frame_budget,
            epochs: t.epochs,
            steps: t.steps,
            eval_every: t.eval_every,
            dev_tokens: t.dev_tokens.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub enabled: bool,
    /// Frequency masks per utterance.
    pub m_f: usize,
    /// Widest frequency mask, in channels.
    pub f_max: usize,
    /// Time masks per utterance.
    pub m_t: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let p = AugmentPolicy::default();
        Self {
            enabled: true,
            m_f: p.num_freq_masks,
            f_max: p.max_freq_width,
            m_t: p.num_time_masks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanSection {
    pub resample_each_epoch: bool,
}

impl Default for SpanSection {
    fn default() -> Self {
        Self {
            resample_each_epoch: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub shift: usize,
    pub sizes: Vec<usize>,
    pub floor: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let band = LengthBand::default();
        Self {
            min_ratio: band.min_ratio,
            max_ratio: band.max_ratio,
            shift: WindowLattice::default().shift(),
            sizes: default_sizes(),
            floor: DEFAULT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwSection {
    pub window: usize,
    pub shift: usize,
    pub features: DtwFeatures,
}

impl Default for DtwSection {
    fn default() -> Self {
        let d = DtwConfig::default();
        Self {
            window: d.window,
            shift: d.shift,
            features: DtwFeatures::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub phones: usize,
    pub words: usize,
    pub dim: usize,
    pub min_phones_per_word: usize,
    pub max_phones_per_word: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub search_utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub one_word_queries: usize,
    pub two_word_queries: usize,
    pub plants_per_query: usize,
    pub phone_frames: usize,
    pub jitter: usize,
    pub noise: f64,
    pub speaker_ratio: f64,
    pub max_gap: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            phones: s.phones,
            words: s.words,
            dim: s.dim,
            min_phones_per_word: s.min_phones_per_word,
            max_phones_per_word: s.max_phones_per_word,
            train_utterances: s.train_utterances,
            dev_utterances: s.dev_utterances,
            search_utterances: s.search_utterances,
            min_words: s.min_words,
            max_words: s.max_words,
            one_word_queries: s.one_word_queries,
            two_word_queries: s.two_word_queries,
            plants_per_query: s.plants_per_query,
            phone_frames: s.phone_frames,
            jitter: s.jitter,
            noise: s.noise,
            speaker_ratio: s.speaker_ratio,
            max_gap: s.max_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub beta: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA }
    }
}

/// Parses `a/b` or a plain decimal.
pub fn parse_ratio(s: &str) -> Result<f64> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().with_context(|| format!("bad ratio {s:?}"))?;
            let b: f64 = b.trim().parse().with_context(|| format!("bad ratio {s:?}"))?;
            a / b
        }
        None => s.trim().parse().with_context(|| format!("bad ratio {s:?}"))?,
    };
    if !v.is_finite() {
        bail!("bad ratio {s:?}");
    }
    Ok(v)
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override {assignment:?} is not of the form key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("bad override key {key:?}");
    }
    let (last, parents) = path.split_last().expect("non-empty");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry((*p).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .with_context(|| format!("override {key:?}: {p} is not a section"))?;
    }
    node.insert((*last).to_owned(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), then applies the overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            hidden: m.hidden,
            word_layers: m.word_layers,
            span_layers: m.span_layers,
            pooling: m.pooling,
            dropout: m.dropout,
            phone_dim: m.phone_dim,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let a = &self.augment;
        TrainConfig {
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            frame_budget: t.frame_budget,
            margin: self.loss.margin,
            k_start: self.loss.k_start,
            k_end: self.loss.k_end,
            epochs: t.epochs,
            steps: t.steps,
            seed: self.seed,
            augment: a.enabled.then_some(AugmentPolicy {
                num_freq_masks: a.m_f,
                max_freq_width: a.f_max,
                num_time_masks: a.m_t,
            }),
            resample_spans: self.spans.resample_each_epoch,
            eval_every: t.eval_every,
            dev_tokens: (t.dev_tokens > 0).then_some(t.dev_tokens),
        }
    }

    pub fn lattice(&self) -> Result<WindowLattice> {
        Ok(WindowLattice::new(self.search.sizes.clone(), self.search.shift)?)
    }

    pub fn search_config(&self) -> Result<SearchConfig> {
        let c = SearchConfig {
            band: LengthBand {
                min_ratio: self.search.min_ratio,
                max_ratio: self.search.max_ratio,
            },
            floor: self.search.floor,
        };
        c.band.validate()?;
        Ok(c)
    }

    pub fn dtw_config(&self) -> Result<DtwConfig> {
        let c = DtwConfig {
            window: self.dtw.window,
            shift: self.dtw.shift,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            phones: s.phones,
            words: s.words,
            dim: s.dim,
            min_phones_per_word: s.min_phones_per_word,
            max_phones_per_word: s.max_phones_per_word,
            train_utterances: s.train_utterances,
            dev_utterances: s.dev_utterances,
            search_utterances: s.search_utterances,
            min_words: s.min_words,
            max_words: s.max_words,
            one_word_queries: s.one_word_queries,
            two_word_queries: s.two_word_queries,
            plants_per_query: s.plants_per_query,
            phone_frames: s.phone_frames,
            jitter: s.jitter,
            noise: s.noise,
            speaker_ratio: s.speaker_ratio,
            max_gap: s.max_gap,
            seed: self.seed,
        }
    }
}
