//! Synthetic corpus generator: a small artificial language rendered as
//! feature frames, with word alignments, spoken queries and ground truth.
//!
//! Each phone is a random mean vector; a word is a phone sequence; an
//! utterance concatenates word renditions separated by short silences.
//! Renditions vary through duration jitter, per-frame noise and a
//! per-utterance offset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{
    write_ground_truth, write_lexicon, write_queries, AlignedWord, CorpusPaths, FeatureMatrix, GroundTruth, Lexicon,
    QueryDef, Split, Trial, Utterance, WordAlignment, DEFAULT_LANGUAGE,
};
use crate::error::{Error, Result};

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
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
    /// Search utterances receiving each query's word sequence.
    pub plants_per_query: usize,
    /// Mean frames per phone.
    pub phone_frames: usize,
    /// Phone durations vary uniformly by up to this many frames.
    pub jitter: usize,
    /// Standard deviation of per-frame noise.
    pub noise: f64,
    /// Per-utterance offset standard deviation, relative to `noise`.
    pub speaker_ratio: f64,
    /// Silences between words last `0..=max_gap` frames.
    pub max_gap: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            phones: 5,
            words: 30,
            dim: 12,
            min_phones_per_word: 2,
            max_phones_per_word: 4,
            train_utterances: 400,
            dev_utterances: 100,
            search_utterances: 50,
            min_words: 3,
            max_words: 6,
            one_word_queries: 40,
            two_word_queries: 40,
            plants_per_query: 3,
            phone_frames: 5,
            jitter: 1,
            noise: 0.6,
            speaker_ratio: 0.5,
            max_gap: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.phones == 0 || self.words == 0 || self.dim == 0 {
            return bad("phones, words and dim must be positive");
        }
        if self.min_phones_per_word == 0 || self.min_phones_per_word > self.max_phones_per_word {
            return bad("invalid phones-per-word range");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("invalid words-per-utterance range");
        }
        if self.phone_frames == 0 || self.jitter >= self.phone_frames {
            return bad("jitter must be below the mean phone duration");
        }
        if !(self.noise >= 0.0 && self.speaker_ratio >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        let distinct: usize = (self.min_phones_per_word..=self.max_phones_per_word)
            .map(|l| self.phones.saturating_pow(l as u32))
            .sum();
        if distinct < self.words {
            return bad("not enough distinct phone sequences for the vocabulary");
        }
        if self.two_word_queries > 0 && self.words < 2 {
            return bad("two-word queries need at least two words");
        }
        if self.plants_per_query > self.search_utterances {
            return bad("more plants per query than search utterances");
        }
        Ok(())
    }
}

/// Phone templates and the vocabulary of the artificial language.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLanguage {
    phone_means: Vec<Vec<f64>>,
    silence: Vec<f64>,
    words: Vec<(String, Vec<usize>)>,
    config: SynthConfig,
}

pub fn phone_name(i: usize) -> String {
    format!("p{i}")
}

pub fn word_name(i: usize) -> String {
    format!("w{i:02}")
}

/// A rendered utterance before it becomes a corpus entry.
#[derive(Debug, Clone)]
pub struct Rendition {
    pub frames: Vec<Vec<f32>>,
    /// `(start, end, word index)` per word.
    pub words: Vec<(usize, usize, usize)>,
}

impl SynthLanguage {
    pub fn new(config: &SynthConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let phone_means = (0..config.phones)
            .map(|_| (0..config.dim).map(|_| normal(rng)).collect())
            .collect();
        let silence = (0..config.dim).map(|_| 0.2 * normal(rng)).collect();
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(config.words);
        while words.len() < config.words {
            let len = rng.gen_range(config.min_phones_per_word..=config.max_phones_per_word);
            let seq: Vec<usize> = (0..len).map(|_| rng.gen_range(0..config.phones)).collect();
            if seen.insert(seq.clone()) {
                words.push((word_name(words.len()), seq));
            }
        }
        Ok(Self {
            phone_means,
            silence,
            words,
            config: config.clone(),
        })
    }

    pub fn lexicon(&self) -> Lexicon {
        let entries: BTreeMap<String, Vec<String>> = self
            .words
            .iter()
            .map(|(w, seq)| (w.clone(), seq.iter().map(|&p| phone_name(p)).collect()))
            .collect();
        Lexicon::new(entries).expect("generated lexicon is valid")
    }

    pub fn vocabulary_size(&self) -> usize {
        self.words.len()
    }

    fn frame(&self, mean: &[f64], offset: &[f64], rng: &mut impl Rng) -> Vec<f32> {
        mean.iter()
            .zip(offset)
            .map(|(&m, &o)| (m + o + self.config.noise * normal(rng)) as f32)
            .collect()
    }

    fn silence_frames(&self, n: usize, offset: &[f64], rng: &mut impl Rng, out: &mut Vec<Vec<f32>>) {
        for _ in 0..n {
            out.push(self.frame(&self.silence, offset, rng));
        }
    }

    /// Renders a word sequence with silences around and between words.
    pub fn render(&self, words: &[usize], rng: &mut impl Rng) -> Rendition {
        let c = &self.config;
        let offset: Vec<f64> = (0..c.dim).map(|_| c.noise * c.speaker_ratio * normal(rng)).collect();
        let mut frames = Vec::new();
        let mut spans = Vec::with_capacity(words.len());
        let lead = rng.gen_range(0..=c.max_gap);
        self.silence_frames(lead, &offset, rng, &mut frames);
        for (k, &w) in words.iter().enumerate() {
            if k > 0 {
                let gap = rng.gen_range(0..=c.max_gap);
                self.silence_frames(gap, &offset, rng, &mut frames);
            }
            let start = frames.len();
            for &p in &self.words[w].1 {
                let dur = if c.jitter == 0 {
                    c.phone_frames
                } else {
                    c.phone_frames - c.jitter + rng.gen_range(0..=2 * c.jitter)
                };
                for _ in 0..dur {
                    frames.push(self.frame(&self.phone_means[p], &offset, rng));
                }
            }
            spans.push((start, frames.len() - 1, w));
        }
        let tail = rng.gen_range(0..=c.max_gap);
        self.silence_frames(tail, &offset, rng, &mut frames);
        Rendition { frames, words: spans }
    }

    pub fn random_words(&self, rng: &mut impl Rng) -> Vec<usize> {
        let n = rng.gen_range(self.config.min_words..=self.config.max_words);
        (0..n).map(|_| rng.gen_range(0..self.words.len())).collect()
    }

    fn utterance(&self, id: String, words: &[usize], lexicon: &Lexicon, rng: &mut impl Rng) -> Result<Utterance> {
        let r = self.render(words, rng);
        let features = FeatureMatrix::from_rows(id.clone(), &r.frames)?;
        let entries = r
            .words
            .iter()
            .map(|&(s, e, w)| AlignedWord::new(s, e, self.words[w].0.clone()))
            .collect();
        let alignment = WordAlignment::new(id, entries, features.frames(), lexicon)?;
        Ok(Utterance {
            features,
            language: DEFAULT_LANGUAGE.to_owned(),
            alignment: Some(alignment),
        })
    }

    /// Unaligned utterances of random words, each at least `min_frames` long.
    pub fn long_collection(&self, count: usize, min_frames: usize, prefix: &str, rng: &mut impl Rng) -> Result<Vec<FeatureMatrix>> {
        (0..count)
            .map(|i| {
                let mut frames = Vec::new();
                while frames.len() < min_frames {
                    let words = self.random_words(rng);
                    frames.extend(self.render(&words, rng).frames);
                }
                FeatureMatrix::from_rows(format!("{prefix}{i:04}"), &frames)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub lexicon: Lexicon,
    pub train: Split,
    pub dev: Split,
    pub search: Split,
    pub queries: Vec<QueryDef>,
    pub truth: GroundTruth,
}

fn contains_run(haystack: &[usize], needle: &[usize]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Generates the whole corpus from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<(SynthLanguage, SynthCorpus)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lang = SynthLanguage::new(config, &mut rng)?;
    let lexicon = lang.lexicon();

    let split = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Result<Split> {
        let utts = (0..n)
            .map(|i| {
                let words = lang.random_words(rng);
                lang.utterance(format!("{prefix}{i:04}"), &words, &lexicon, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Split::new(utts)
    };
    let train = split("train_", config.train_utterances, &mut rng)?;
    let dev = split("dev_", config.dev_utterances, &mut rng)?;

    // query word sequences
    let mut query_words: Vec<(String, Vec<usize>, &str)> = Vec::new();
    let mut order: Vec<usize> = (0..lang.words.len()).collect();
    order.shuffle(&mut rng);
    for i in 0..config.one_word_queries {
        query_words.push((format!("q1w_{i:03}"), vec![order[i % order.len()]], "1w"));
    }
    let mut pairs = BTreeSet::new();
    while pairs.len() < config.two_word_queries {
        let a = rng.gen_range(0..lang.words.len());
        let b = rng.gen_range(0..lang.words.len());
        if a != b {
            pairs.insert((a, b));
        }
    }
    let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
    pairs.shuffle(&mut rng);
    for (i, (a, b)) in pairs.into_iter().enumerate() {
        query_words.push((format!("q2w_{i:03}"), vec![a, b], "2w"));
    }

    // search collection with planted query sequences
    let mut search_words: Vec<Vec<usize>> = (0..config.search_utterances).map(|_| lang.random_words(&mut rng)).collect();
    // `joined[u][i]` marks a word that continues a planted run; nothing may be
    // inserted in front of it
    let mut joined: Vec<Vec<bool>> = search_words.iter().map(|w| vec![false; w.len()]).collect();
    let all: Vec<usize> = (0..config.search_utterances).collect();
    for (_, seq, _) in &query_words {
        for &u in all.choose_multiple(&mut rng, config.plants_per_query) {
            let slots: Vec<usize> = (0..=search_words[u].len())
                .filter(|&i| i == joined[u].len() || !joined[u][i])
                .collect();
            let at = *slots.choose(&mut rng).expect("the end is always a slot");
            search_words[u].splice(at..at, seq.iter().copied());
            joined[u].splice(at..at, (0..seq.len()).map(|i| i > 0));
        }
    }
    let search = Split::new(
        search_words
            .iter()
            .enumerate()
            .map(|(i, w)| lang.utterance(format!("search_{i:04}"), w, &lexicon, &mut rng))
            .collect::<Result<Vec<_>>>()?,
    )?;

    // queries excised from held-out renditions with context words
    let mut queries = Vec::with_capacity(query_words.len());
    for (id, seq, tag) in &query_words {
        let left = rng.gen_range(0..=1);
        let right = rng.gen_range(0..=1);
        let mut words: Vec<usize> = (0..left).map(|_| rng.gen_range(0..lang.words.len())).collect();
        words.extend(seq);
        words.extend((0..right).map(|_| rng.gen_range(0..lang.words.len())));
        let r = lang.render(&words, &mut rng);
        let start = r.words[left].0;
        let end = r.words[left + seq.len() - 1].1;
        let full = FeatureMatrix::from_rows("held_out", &r.frames)?;
        queries.push(QueryDef {
            features: full.excise(id.clone(), start, end)?,
            words: seq.iter().map(|&w| lang.words[w].0.clone()).collect(),
            tag: Some((*tag).to_owned()),
        });
    }

    let mut trials = Vec::new();
    for (id, seq, tag) in &query_words {
        for (u, words) in search_words.iter().enumerate() {
            trials.push(Trial {
                query_id: id.clone(),
                utterance_id: format!("search_{u:04}"),
                relevant: contains_run(words, seq),
                tag: Some((*tag).to_owned()),
            });
        }
    }
    let truth = GroundTruth::new(trials)?;
    Ok((
        lang,
        SynthCorpus {
            lexicon,
            train,
            dev,
            search,
            queries,
            truth,
        },
    ))
}

impl SynthCorpus {
    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let paths = CorpusPaths::new(root.as_ref());
        write_lexicon(&self.lexicon, paths.lexicon())?;
        write_ground_truth(&self.truth, paths.ground_truth())?;
        self.train.write(paths.train())?;
        self.dev.write(paths.dev())?;
        self.search.write(paths.search())?;
        write_queries(&self.queries, paths.queries())
    }

    pub fn query_features(&self) -> Vec<FeatureMatrix> {
        self.queries.iter().map(|q| q.features.clone()).collect()
    }

    pub fn search_features(&self) -> Vec<FeatureMatrix> {
        self.search.utterances().iter().map(|u| u.features.clone()).collect()
    }
}
