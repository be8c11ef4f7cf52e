use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::corpus::FeatureMatrix;
use crate::dtw::{dtw_frames, dtw_search_query, DtwCollection, DtwConfig, DtwFeatures};
use crate::encoder::{fingerprint, EmbeddingModel};
use crate::error::{Error, Result};
use crate::search::{score_query, QueryEmbedding, SearchConfig, SegmentIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Embedding,
    DtwRaw,
    DtwHidden,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" => Ok(Self::Embedding),
            "dtw-raw" => Ok(Self::DtwRaw),
            "dtw-hidden" => Ok(Self::DtwHidden),
            other => Err(Error::Config(format!(
                "unknown backend {other:?} (embedding|dtw-raw|dtw-hidden)"
            ))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Embedding => "embedding",
            Self::DtwRaw => "dtw-raw",
            Self::DtwHidden => "dtw-hidden",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub backend: Backend,
    pub queries: usize,
    pub sec_per_query: f64,
    pub comparisons_per_query: f64,
}

impl BenchResult {
    /// `backend<TAB>sec_per_query<TAB>comparisons_per_query`
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.1}",
            self.backend, self.sec_per_query, self.comparisons_per_query
        )
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build benchmark thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn summarize(backend: Backend, timings: &[(f64, usize)]) -> Result<BenchResult> {
    if timings.is_empty() {
        return Err(Error::Config("benchmark needs at least one query".into()));
    }
    let n = timings.len() as f64;
    Ok(BenchResult {
        backend,
        queries: timings.len(),
        sec_per_query: timings.iter().map(|t| t.0).sum::<f64>() / n,
        comparisons_per_query: timings.iter().map(|t| t.1 as f64).sum::<f64>() / n,
    })
}

/// Per-query embedding plus scan of a prebuilt index, on one thread.
pub fn bench_embedding(
    model: &EmbeddingModel,
    queries: &[FeatureMatrix],
    index: &SegmentIndex,
    config: &SearchConfig,
) -> Result<BenchResult> {
    let fp = fingerprint(model);
    let timings = single_thread(|| {
        queries
            .iter()
            .map(|q| {
                let t0 = Instant::now();
                let emb = QueryEmbedding::with_fingerprint(model, q, fp)?;
                let (_, compared) = score_query(&emb, index, config)?;
                Ok((t0.elapsed().as_secs_f64(), compared))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    summarize(Backend::Embedding, &timings)
}

/// Per-query DTW over every window of a prepared collection, on one thread.
pub fn bench_dtw(
    queries: &[FeatureMatrix],
    collection: &DtwCollection,
    config: &DtwConfig,
    features: DtwFeatures,
    model: Option<&EmbeddingModel>,
) -> Result<BenchResult> {
    let backend = match features {
        DtwFeatures::Raw => Backend::DtwRaw,
        DtwFeatures::Hidden => Backend::DtwHidden,
    };
    let timings = single_thread(|| {
        queries
            .iter()
            .map(|q| {
                let t0 = Instant::now();
                let frames = dtw_frames(q, features, model)?;
                let (_, windows) = dtw_search_query(q.utterance_id(), &frames, collection, config)?;
                Ok((t0.elapsed().as_secs_f64(), windows))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    summarize(backend, &timings)
}
