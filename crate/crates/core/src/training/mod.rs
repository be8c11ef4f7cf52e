//! Two-stage training: word-level acoustic and written encoders first, then
//! span-level encoders on top of the frozen word-level model.

mod batching;
mod optimizer;

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use batching::{make_batches, BatchItem};
pub use optimizer::{Adam, AdamConfig, BETA1, BETA2, EPSILON};

use crate::augment::{spec_augment, AugmentPolicy};
use crate::corpus::{FeatureMatrix, Lexicon, Split, Utterance};
use crate::encoder::{embed_batch, loss_and_gradients, Architecture, EmbeddingModel, Parameters, Pooling, SegmentRequest, Stage};
use crate::error::{Error, Result};
use crate::eval::{same_different_eval, PairScoring};
use crate::objective::{batch_objective, batch_objective_with_gradients, EmbeddedBatch, MiningConfig};
use crate::spans::{merge_spans, span_label_key};

/// Encoder shape for a new word-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub word_layers: usize,
    pub span_layers: usize,
    pub pooling: Pooling,
    pub dropout: f64,
    pub phone_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            word_layers: 2,
            span_layers: 1,
            pooling: Pooling::Mean,
            dropout: 0.2,
            phone_dim: 16,
        }
    }
}

impl ModelConfig {
    pub fn word_architecture(&self, input_dim: usize, lexicon: &Lexicon) -> Architecture {
        Architecture {
            stage: Stage::Word,
            input_dim,
            hidden: self.hidden,
            word_layers: self.word_layers,
            span_layers: 0,
            pooling: self.pooling,
            dropout: self.dropout,
            phone_dim: self.phone_dim,
            phones: lexicon.phones().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Maximum acoustic frames per batch.
    pub frame_budget: usize,
    pub margin: f64,
    pub k_start: usize,
    pub k_end: usize,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub steps: Option<usize>,
    pub seed: u64,
    /// `None` disables masking.
    pub augment: Option<AugmentPolicy>,
    /// Draw fresh spans every epoch (span stage).
    pub resample_spans: bool,
    /// Dev AP every this many steps; 0 evaluates only after the last step.
    pub eval_every: usize,
    /// Cap on dev word tokens used for AP.
    pub dev_tokens: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            weight_decay: 0.0001,
            frame_budget: 2000,
            margin: crate::objective::DEFAULT_MARGIN,
            k_start: crate::objective::DEFAULT_K_START,
            k_end: crate::objective::DEFAULT_K_END,
            epochs: 10,
            steps: None,
            seed: 0,
            augment: Some(AugmentPolicy::default()),
            resample_spans: true,
            eval_every: 50,
            dev_tokens: Some(400),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if self.frame_budget == 0 {
            return bad("frame budget must be positive".into());
        }
        if self.k_start == 0 || self.k_end == 0 {
            return bad("k must be >= 1".into());
        }
        if self.steps.is_none() && self.epochs == 0 {
            return bad("need at least one epoch or an explicit step count".into());
        }
        MiningConfig {
            margin: self.margin,
            k: self.k_end,
        }
        .validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
        }
    }
}

/// Negatives per term at `step` (0-based) of `total`: linear from `k_start`
/// at the first step to `k_end` at the last, rounded to the nearest integer.
pub fn k_schedule(step: usize, total: usize, k_start: usize, k_end: usize) -> usize {
    if total <= 1 {
        return k_end;
    }
    let frac = step.min(total - 1) as f64 / (total - 1) as f64;
    (k_start as f64 + (k_end as f64 - k_start as f64) * frac).round() as usize
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub k: usize,
    pub dev_ap: Option<f64>,
}

impl fmt::Display for LogRecord {
    /// `step<TAB>loss<TAB>k<TAB>dev_ap`, with `-` when AP was not measured.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t{}\t", self.step, self.loss, self.k)?;
        match self.dev_ap {
            Some(ap) => write!(f, "{ap:.6}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub log: Vec<LogRecord>,
    /// Held-out objective before the first and after the last update.
    pub heldout_initial: Option<f64>,
    pub heldout_final: Option<f64>,
    pub steps: usize,
}

impl TrainOutcome {
    pub fn log_text(&self) -> String {
        let mut out = String::from("step\tloss\tk\tdev_ap\n");
        for r in &self.log {
            out.push_str(&format!("{r}\n"));
        }
        out
    }
}

/// Labelled segments of one utterance.
type Pairs = Vec<(usize, usize, Vec<String>)>;

fn word_pairs(u: &Utterance) -> Pairs {
    u.alignment
        .iter()
        .flat_map(|a| a.entries())
        .map(|e| (e.start, e.end, vec![e.word.clone()]))
        .collect()
}

fn span_pairs<R: Rng + ?Sized>(u: &Utterance, rng: &mut R) -> Pairs {
    match &u.alignment {
        Some(a) => merge_spans(a, rng)
            .entries()
            .iter()
            .map(|e| (e.start, e.end, e.words.clone()))
            .collect(),
        None => Vec::new(),
    }
}

/// Features and labelled segments ready for one forward/backward pass.
struct PreparedBatch {
    features: Vec<FeatureMatrix>,
    segments: Vec<Vec<(usize, usize)>>,
    dropout_seeds: Vec<Option<u64>>,
    labels: Vec<Vec<String>>,
    label_of: Vec<usize>,
}

impl PreparedBatch {
    fn new(items: Vec<(FeatureMatrix, Pairs, Option<u64>)>) -> Self {
        let mut keys: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut label_of = Vec::new();
        let mut features = Vec::new();
        let mut segments = Vec::new();
        let mut dropout_seeds = Vec::new();
        for (x, pairs, seed) in items {
            if pairs.is_empty() {
                continue;
            }
            let mut segs = Vec::with_capacity(pairs.len());
            for (s, e, words) in pairs {
                let key = span_label_key(&words);
                let idx = *keys.entry(key).or_insert_with(|| {
                    labels.push(words);
                    labels.len() - 1
                });
                label_of.push(idx);
                segs.push((s, e));
            }
            features.push(x);
            segments.push(segs);
            dropout_seeds.push(seed);
        }
        Self {
            features,
            segments,
            dropout_seeds,
            labels,
            label_of,
        }
    }

    fn requests(&self) -> Vec<SegmentRequest<'_>> {
        self.features
            .iter()
            .zip(&self.segments)
            .zip(&self.dropout_seeds)
            .map(|((f, s), &d)| SegmentRequest {
                features: f,
                segments: s.clone(),
                dropout_seed: d,
            })
            .collect()
    }

    fn objective(&self, model: &EmbeddingModel, lexicon: &Lexicon, mining: &MiningConfig) -> Result<f64> {
        let emb = embed_batch(model, &self.requests(), &self.labels, lexicon)?;
        batch_objective(
            &EmbeddedBatch {
                acoustic: &emb.acoustic,
                labels: &self.label_of,
                written: &emb.written,
            },
            mining,
        )
    }
}

/// SHA-256 over every frozen tensor.
pub fn frozen_hash(model: &EmbeddingModel) -> [u8; 32] {
    let mut h = Sha256::new();
    for (name, t) in model.named_tensors() {
        if !model.is_trainable(&name) {
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

/// Dev utterances (first language, split order) filling one frame budget,
/// with spans drawn once from a fixed seed.
fn heldout_batch(dev: &Split, stage: Stage, budget: usize, seed: u64) -> Option<PreparedBatch> {
    let first = dev.utterances().iter().find(|u| u.alignment.as_ref().is_some_and(|a| !a.is_empty()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_4e1d);
    let mut frames = 0;
    let mut items = Vec::new();
    for u in dev.utterances() {
        if u.language != first.language || u.alignment.as_ref().is_none_or(|a| a.is_empty()) {
            continue;
        }
        if frames + u.features.frames() > budget && !items.is_empty() {
            break;
        }
        frames += u.features.frames();
        let pairs = match stage {
            Stage::Word => word_pairs(u),
            Stage::Span => span_pairs(u, &mut rng),
        };
        items.push((u.features.clone(), pairs, None));
    }
    let batch = PreparedBatch::new(items);
    (batch.labels.len() >= 2).then_some(batch)
}

struct Loop<'a> {
    train: &'a Split,
    dev: Option<&'a Split>,
    lexicon: &'a Lexicon,
    config: &'a TrainConfig,
}

impl Loop<'_> {
    fn run(&self, mut model: EmbeddingModel) -> Result<TrainOutcome> {
        let cfg = self.config;
        cfg.validate()?;
        if let Some(policy) = &cfg.augment {
            if let Some(dim) = self.train.dim() {
                policy.validate(dim)?;
            }
        }
        let stage = model.stage();
        let usable: Vec<&Utterance> = self
            .train
            .utterances()
            .iter()
            .filter(|u| u.alignment.as_ref().is_some_and(|a| !a.is_empty()))
            .collect();
        if usable.is_empty() {
            return Err(Error::DegenerateBatch("no aligned training utterances".into()));
        }
        let items: Vec<BatchItem<'_>> = usable
            .iter()
            .map(|u| BatchItem {
                frames: u.features.frames(),
                language: &u.language,
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut batches = make_batches(&items, cfg.frame_budget, &mut rng);
        let total = cfg.steps.unwrap_or(cfg.epochs * batches.len());
        let mut fixed_spans: Option<Vec<Pairs>> = None;
        if stage == Stage::Span && !cfg.resample_spans {
            fixed_spans = Some(usable.iter().map(|u| span_pairs(u, &mut rng)).collect());
        }

        let heldout = self
            .dev
            .and_then(|d| heldout_batch(d, stage, cfg.frame_budget, cfg.seed));
        let heldout_mining = MiningConfig {
            margin: cfg.margin,
            k: cfg.k_end,
        };
        let heldout_initial = heldout
            .as_ref()
            .map(|b| b.objective(&model, self.lexicon, &heldout_mining))
            .transpose()?;

        let frozen = frozen_hash(&model);
        let mut adam = Adam::new(&model);
        let mut log = Vec::with_capacity(total);
        let mut step = 0;
        let mut epoch = 0;
        while step < total {
            if epoch > 0 {
                batches = make_batches(&items, cfg.frame_budget, &mut rng);
            }
            let mut progressed = false;
            for batch in &batches {
                if step == total {
                    break;
                }
                let k = k_schedule(step, total, cfg.k_start, cfg.k_end);
                let prepared = self.prepare(batch, &usable, fixed_spans.as_deref(), stage, &mut rng)?;
                if prepared.labels.len() < 2 {
                    log::warn!("skipping a batch with {} distinct label(s)", prepared.labels.len());
                    continue;
                }
                let mining = MiningConfig { margin: cfg.margin, k };
                let (loss, grads) =
                    loss_and_gradients(&model, &prepared.requests(), &prepared.labels, self.lexicon, |emb| {
                        batch_objective_with_gradients(
                            &EmbeddedBatch {
                                acoustic: &emb.acoustic,
                                labels: &prepared.label_of,
                                written: &emb.written,
                            },
                            &mining,
                        )
                    })?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { step, loss });
                }
                adam.step(&mut model, &grads, &cfg.adam())?;
                step += 1;
                progressed = true;
                let evaluate = step == total || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
                let dev_ap = match self.dev {
                    Some(dev) if evaluate => Some(self.dev_ap(dev, &model)?),
                    _ => None,
                };
                let record = LogRecord { step, loss, k, dev_ap };
                log::debug!("{record}");
                log.push(record);
            }
            if frozen_hash(&model) != frozen {
                return Err(Error::Architecture(format!("frozen parameters changed during epoch {epoch}")));
            }
            if !progressed {
                return Err(Error::DegenerateBatch("every batch of an epoch had fewer than two labels".into()));
            }
            epoch += 1;
        }

        let heldout_final = heldout
            .as_ref()
            .map(|b| b.objective(&model, self.lexicon, &heldout_mining))
            .transpose()?;
        Ok(TrainOutcome {
            model,
            log,
            heldout_initial,
            heldout_final,
            steps: step,
        })
    }

    fn prepare(
        &self,
        batch: &[usize],
        usable: &[&Utterance],
        fixed_spans: Option<&[Pairs]>,
        stage: Stage,
        rng: &mut ChaCha8Rng,
    ) -> Result<PreparedBatch> {
        let mut items = Vec::with_capacity(batch.len());
        for &i in batch {
            let u = usable[i];
            let aug_seed: u64 = rng.gen();
            let dropout_seed: u64 = rng.gen();
            let pairs = match (stage, fixed_spans) {
                (Stage::Word, _) => word_pairs(u),
                (Stage::Span, Some(fixed)) => fixed[i].clone(),
                (Stage::Span, None) => span_pairs(u, rng),
            };
            let features = match (&self.config.augment, &u.alignment) {
                (Some(policy), Some(a)) => {
                    spec_augment(&u.features, a, policy, &mut ChaCha8Rng::seed_from_u64(aug_seed))?
                }
                _ => u.features.clone(),
            };
            items.push((features, pairs, Some(dropout_seed)));
        }
        Ok(PreparedBatch::new(items))
    }

    fn dev_ap(&self, dev: &Split, model: &EmbeddingModel) -> Result<f64> {
        Ok(same_different_eval(dev, Some(model), PairScoring::Embedding, self.config.dev_tokens)?.ap)
    }
}

fn check_compatible(arch: &Architecture, train: &Split, lexicon: &Lexicon) -> Result<()> {
    if let Some(dim) = train.dim() {
        if dim != arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: arch.input_dim,
                actual: dim,
            });
        }
    }
    if arch.phones != lexicon.phones() {
        return Err(Error::Architecture(
            "lexicon phone inventory differs from the model's".into(),
        ));
    }
    Ok(())
}

/// Trains word-level acoustic and written encoders from random
/// initialization.
pub fn train_word_stage(
    train: &Split,
    dev: Option<&Split>,
    lexicon: &Lexicon,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let dim = train
        .dim()
        .ok_or_else(|| Error::DegenerateBatch("empty training split".into()))?;
    let model = EmbeddingModel::init(model_config.word_architecture(dim, lexicon), config.seed)?;
    Loop {
        train,
        dev,
        lexicon,
        config,
    }
    .run(model)
}

/// Trains `span_layers` new acoustic layers and a span-level written encoder
/// on top of a frozen word-level model.
pub fn train_span_stage(
    word: &EmbeddingModel,
    span_layers: usize,
    train: &Split,
    dev: Option<&Split>,
    lexicon: &Lexicon,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    check_compatible(word.architecture(), train, lexicon)?;
    let model = EmbeddingModel::span_from_word(word, span_layers, config.seed)?;
    Loop {
        train,
        dev,
        lexicon,
        config,
    }
    .run(model)
}

/// Continues training an existing model (either stage).
pub fn train_model(
    model: EmbeddingModel,
    train: &Split,
    dev: Option<&Split>,
    lexicon: &Lexicon,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    check_compatible(model.architecture(), train, lexicon)?;
    Loop {
        train,
        dev,
        lexicon,
        config,
    }
    .run(model)
}
