//! Frame-level dynamic time warping with cosine local distance, used as a
//! search baseline and as a segment-pair scorer.
//!
//! Steps are the symmetric unit moves (diagonal, horizontal, vertical) and
//! both endpoints are anchored. The alignment with the smallest accumulated
//! cost is chosen (shorter path on exact ties) and its cost is divided by its
//! length.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureMatrix, ScoreEntry, ScoreTable};
use crate::encoder::EmbeddingModel;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 90;
pub const DEFAULT_SHIFT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DtwFeatures {
    #[default]
    Raw,
    /// Final-layer encoder states.
    Hidden,
}

impl FromStr for DtwFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "hidden" => Ok(Self::Hidden),
            other => Err(Error::Config(format!("unknown DTW feature type {other:?} (raw|hidden)"))),
        }
    }
}

impl fmt::Display for DtwFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Hidden => "hidden",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DtwConfig {
    pub window: usize,
    pub shift: usize,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            shift: DEFAULT_SHIFT,
        }
    }
}

impl DtwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.shift == 0 {
            return Err(Error::Config("DTW window and shift must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-major sequence of unit-norm frames.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitFrames {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl UnitFrames {
    pub fn new<I, R>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut data = Vec::new();
        let mut frames = 0;
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm);
            }
            data.extend(row.iter().map(|v| v / norm));
            frames += 1;
        }
        Ok(Self { frames, dim, data })
    }

    pub fn from_features(x: &FeatureMatrix) -> Result<Self> {
        Self::new(x.rows().map(|r| r.iter().map(|&v| v as f64).collect::<Vec<_>>()), x.dim())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frames `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> UnitFramesRef<'_> {
        UnitFramesRef {
            frames: len,
            dim: self.dim,
            data: &self.data[start * self.dim..(start + len) * self.dim],
        }
    }

    pub fn as_ref(&self) -> UnitFramesRef<'_> {
        self.slice(0, self.frames)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UnitFramesRef<'a> {
    frames: usize,
    dim: usize,
    data: &'a [f64],
}

impl UnitFramesRef<'_> {
    fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Cosine distance between two unit vectors.
fn local(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Lexicographic `(cost, length)` minimum.
fn better(a: (f64, u32), b: (f64, u32)) -> (f64, u32) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Normalized DTW distance between two unit-frame sequences.
pub fn dtw_unit(a: UnitFramesRef<'_>, b: UnitFramesRef<'_>) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            actual: b.dim,
        });
    }
    if a.frames == 0 || b.frames == 0 {
        return Err(Error::Config("DTW needs non-empty sequences".into()));
    }
    let m = b.frames;
    let mut prev: Vec<(f64, u32)> = vec![(f64::INFINITY, 0); m];
    let mut cur: Vec<(f64, u32)> = vec![(f64::INFINITY, 0); m];
    for i in 0..a.frames {
        let ai = a.row(i);
        for j in 0..m {
            let d = local(ai, b.row(j));
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, u32::MAX);
                if i > 0 && j > 0 {
                    best = better(best, prev[j - 1]);
                }
                if i > 0 {
                    best = better(best, prev[j]);
                }
                if j > 0 {
                    best = better(best, cur[j - 1]);
                }
                best
            };
            cur[j] = (best.0 + d, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[m - 1];
    Ok(cost / len as f64)
}

/// Normalized DTW distance between two frame sequences.
pub fn dtw_distance<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B]) -> Result<f64> {
    let dim = a.first().map_or(0, |r| r.as_ref().len());
    let ua = UnitFrames::new(a, dim)?;
    let ub = UnitFrames::new(b, dim)?;
    dtw_unit(ua.as_ref(), ub.as_ref())
}

/// Window starts for an utterance of `frames` frames; a short utterance gets
/// one truncated window.
pub fn dtw_windows(frames: usize, config: &DtwConfig) -> Vec<(usize, usize)> {
    if frames <= config.window {
        return vec![(0, frames)];
    }
    (0..=frames - config.window)
        .step_by(config.shift)
        .map(|s| (s, config.window))
        .collect()
}

/// Frames used for DTW: raw features or final-layer encoder states.
pub fn dtw_frames(x: &FeatureMatrix, features: DtwFeatures, model: Option<&EmbeddingModel>) -> Result<UnitFrames> {
    match features {
        DtwFeatures::Raw => UnitFrames::from_features(x),
        DtwFeatures::Hidden => {
            let model = model.ok_or_else(|| Error::Config("hidden-state DTW needs a model".into()))?;
            let states = model.encode_utterance(x)?;
            UnitFrames::new(states.data.chunks_exact(states.dim), states.dim)
        }
    }
}

/// Score of one query against one utterance: the best (largest) negated
/// window distance. Also returns the number of windows compared.
pub fn dtw_score(query: &UnitFrames, utterance: &UnitFrames, config: &DtwConfig) -> Result<(f64, usize)> {
    let windows = dtw_windows(utterance.frames(), config);
    let mut best = f64::NEG_INFINITY;
    for &(s, len) in &windows {
        best = best.max(-dtw_unit(query.as_ref(), utterance.slice(s, len))?);
    }
    Ok((best, windows.len()))
}

/// Utterance ids with their DTW frames, prepared once for many queries.
pub struct DtwCollection {
    pub utterances: Vec<(String, UnitFrames)>,
}

impl DtwCollection {
    pub fn build(collection: &[FeatureMatrix], features: DtwFeatures, model: Option<&EmbeddingModel>) -> Result<Self> {
        let utterances = collection
            .par_iter()
            .map(|x| Ok((x.utterance_id().to_owned(), dtw_frames(x, features, model)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { utterances })
    }
}

/// Scores one query against every utterance; returns the rows and the total
/// window count.
pub fn dtw_search_query(
    query_id: &str,
    query: &UnitFrames,
    collection: &DtwCollection,
    config: &DtwConfig,
) -> Result<(Vec<ScoreEntry>, usize)> {
    config.validate()?;
    let scored = collection
        .utterances
        .par_iter()
        .map(|(id, frames)| {
            let (score, n) = dtw_score(query, frames, config)?;
            Ok((
                ScoreEntry {
                    query_id: query_id.to_owned(),
                    utterance_id: id.clone(),
                    score,
                },
                n,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let windows = scored.iter().map(|(_, n)| n).sum();
    Ok((scored.into_iter().map(|(e, _)| e).collect(), windows))
}

/// DTW search of every query over the whole collection.
pub fn dtw_search(
    queries: &[FeatureMatrix],
    collection: &[FeatureMatrix],
    config: &DtwConfig,
    features: DtwFeatures,
    model: Option<&EmbeddingModel>,
) -> Result<ScoreTable> {
    config.validate()?;
    let prepared = DtwCollection::build(collection, features, model)?;
    let mut entries = Vec::new();
    for q in queries {
        let frames = dtw_frames(q, features, model)?;
        entries.extend(dtw_search_query(q.utterance_id(), &frames, &prepared, config)?.0);
    }
    ScoreTable::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sequences_have_zero_distance() {
        let x = vec![vec![1.0, 2.0], vec![-0.5, 0.3], vec![0.1, 0.1]];
        assert!(dtw_distance(&x, &x).unwrap().abs() < 1e-15);
    }

    #[test]
    fn single_frames_give_local_distance() {
        let d = dtw_distance(&[vec![1.0, 0.0]], &[vec![1.0, 1.0]]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            dtw_distance(&[vec![1.0, 0.0]], &[vec![1.0, 0.0, 0.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(dtw_distance(&[vec![0.0, 0.0]], &[vec![1.0, 0.0]]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn window_counts() {
        let c = DtwConfig::default();
        assert_eq!(dtw_windows(200, &c).len(), 12);
        assert_eq!(dtw_windows(200, &c).last(), Some(&(110, 90)));
        assert_eq!(dtw_windows(50, &c), vec![(0, 50)]);
        assert_eq!(dtw_windows(90, &c), vec![(0, 90)]);
    }

    #[test]
    fn query_equal_to_window_scores_zero() {
        let utt: Vec<Vec<f64>> = (0..40).map(|t| vec![(t as f64).sin() + 1.5, (t as f64 * 0.3).cos()]).collect();
        let u = UnitFrames::new(&utt, 2).unwrap();
        let q = UnitFrames::new(&utt[10..30], 2).unwrap();
        let (score, n) = dtw_score(&q, &u, &DtwConfig { window: 20, shift: 10 }).unwrap();
        assert_eq!(n, 3);
        assert!(score.abs() < 1e-12);
    }
}
