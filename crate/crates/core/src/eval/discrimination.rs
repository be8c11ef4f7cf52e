use rayon::prelude::*;

use crate::corpus::{FeatureMatrix, Split};
use crate::dtw::{dtw_frames, dtw_unit, DtwFeatures};
use crate::encoder::EmbeddingModel;
use crate::error::{Error, Result};

/// Mean over relevant items of the precision at their rank. Items are ranked
/// by descending score; ties keep input order.
pub fn average_precision(pairs: &[(f64, bool)]) -> Result<f64> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].0.total_cmp(&pairs[a].0));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if pairs[i].1 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::InvalidTrials("average precision needs at least one positive".into()));
    }
    Ok(total / hits as f64)
}

/// An aligned word occurrence: utterance index into a split, frame range and
/// word label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken {
    pub utterance: usize,
    pub start: usize,
    pub end: usize,
    pub word: String,
}

/// Word tokens of every aligned utterance, in split order.
pub fn word_tokens(split: &Split, limit: Option<usize>) -> Vec<WordToken> {
    let mut out = Vec::new();
    for (u, utt) in split.utterances().iter().enumerate() {
        if let Some(a) = &utt.alignment {
            for e in a.entries() {
                out.push(WordToken {
                    utterance: u,
                    start: e.start,
                    end: e.end,
                    word: e.word.clone(),
                });
            }
        }
    }
    if let Some(n) = limit {
        out.truncate(n);
    }
    out
}

/// Same/different pair statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminationReport {
    pub ap: f64,
    pub pairs: usize,
    pub positives: usize,
}

impl DiscriminationReport {
    /// Fraction of same-word pairs.
    pub fn prior(&self) -> f64 {
        self.positives as f64 / self.pairs as f64
    }
}

/// AP over all unordered token pairs `(i, j)`, `i < j`, scored by `score`.
pub fn same_different_ap<F>(labels: &[&str], score: F) -> Result<DiscriminationReport>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let n = labels.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| Ok((score(i, j)?, labels[i] == labels[j])))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, bool)> = rows.into_iter().flatten().collect();
    let positives = pairs.iter().filter(|p| p.1).count();
    Ok(DiscriminationReport {
        ap: average_precision(&pairs)?,
        pairs: pairs.len(),
        positives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScoring {
    /// Cosine similarity of pooled segment embeddings.
    Embedding,
    /// Negated DTW distance between segment frames.
    Dtw(DtwFeatures),
}

fn unit(v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

/// Same/different word discrimination over the aligned words of `split`.
pub fn same_different_eval(
    split: &Split,
    model: Option<&EmbeddingModel>,
    scoring: PairScoring,
    limit: Option<usize>,
) -> Result<DiscriminationReport> {
    let tokens = word_tokens(split, limit);
    let labels: Vec<&str> = tokens.iter().map(|t| t.word.as_str()).collect();
    let features: Vec<&FeatureMatrix> = split.utterances().iter().map(|u| &u.features).collect();
    match scoring {
        PairScoring::Embedding => {
            let model = model.ok_or_else(|| Error::Config("embedding scoring needs a model".into()))?;
            let embeddings = embed_tokens(model, &features, &tokens)?;
            same_different_ap(&labels, |i, j| {
                Ok(embeddings[i].iter().zip(&embeddings[j]).map(|(a, b)| a * b).sum())
            })
        }
        PairScoring::Dtw(kind) => {
            let used: Vec<usize> = {
                let mut u: Vec<usize> = tokens.iter().map(|t| t.utterance).collect();
                u.dedup();
                u
            };
            let mut frames = vec![None; features.len()];
            let prepared = used
                .par_iter()
                .map(|&u| dtw_frames(features[u], kind, model).map(|f| (u, f)))
                .collect::<Result<Vec<_>>>()?;
            for (u, f) in prepared {
                frames[u] = Some(f);
            }
            same_different_ap(&labels, |i, j| {
                let (a, b) = (&tokens[i], &tokens[j]);
                let fa = frames[a.utterance].as_ref().expect("prepared");
                let fb = frames[b.utterance].as_ref().expect("prepared");
                Ok(-dtw_unit(fa.slice(a.start, a.end - a.start + 1), fb.slice(b.start, b.end - b.start + 1))?)
            })
        }
    }
}

/// Unit-norm segment embeddings, one encoder pass per utterance.
pub fn embed_tokens(model: &EmbeddingModel, features: &[&FeatureMatrix], tokens: &[WordToken]) -> Result<Vec<Vec<f64>>> {
    let mut by_utt: Vec<Vec<usize>> = vec![Vec::new(); features.len()];
    for (k, t) in tokens.iter().enumerate() {
        by_utt[t.utterance].push(k);
    }
    let per_utt = by_utt
        .par_iter()
        .enumerate()
        .filter(|(_, ks)| !ks.is_empty())
        .map(|(u, ks)| {
            let states = model.encode_utterance(features[u])?;
            ks.iter()
                .map(|&k| {
                    let t = &tokens[k];
                    Ok((k, unit(states.pool(t.start, t.end, model.pooling())?)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Vec::new(); tokens.len()];
    for (k, e) in per_utt.into_iter().flatten() {
        out[k] = e;
    }
    Ok(out)
}
