//! Sliding-window segment index over a search collection and query scoring
//! by maximum cosine similarity within a length band.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{FeatureMatrix, ScoreEntry, ScoreTable};
use crate::encoder::{fingerprint, EmbeddingModel};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic, ByteReader, ByteWriter};

pub const INDEX_MAGIC: &[u8; 4] = b"IDX1";
pub const DEFAULT_SHIFT: usize = 5;
pub const DEFAULT_MIN_RATIO: f64 = 2.0 / 3.0;
pub const DEFAULT_MAX_RATIO: f64 = 4.0 / 3.0;
/// Score of an utterance that has no segment inside the length band.
pub const DEFAULT_FLOOR: f64 = -1.0;

/// `12, 15, ..., 30, 36, 42, ..., 120`.
pub fn default_sizes() -> Vec<usize> {
    (12..=30).step_by(3).chain((36..=120).step_by(6)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLattice {
    sizes: Vec<usize>,
    shift: usize,
}

impl Default for WindowLattice {
    fn default() -> Self {
        Self {
            sizes: default_sizes(),
            shift: DEFAULT_SHIFT,
        }
    }
}

impl WindowLattice {
    pub fn new(sizes: Vec<usize>, shift: usize) -> Result<Self> {
        if shift == 0 {
            return Err(Error::Config("window shift must be >= 1".into()));
        }
        if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "window sizes must be positive and strictly increasing, got {sizes:?}"
            )));
        }
        Ok(Self { sizes, shift })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn shift(&self) -> usize {
        self.shift
    }
}

/// `(start, length)` of every window, ordered by size then start.
pub fn enumerate_windows(frames: usize, lattice: &WindowLattice) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &w in lattice.sizes.iter().take_while(|&&w| w <= frames) {
        out.extend((0..=frames - w).step_by(lattice.shift).map(|s| (s, w)));
    }
    out
}

/// Admitted segment lengths `[ceil(min_ratio * lq), floor(max_ratio * lq)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthBand {
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Default for LengthBand {
    fn default() -> Self {
        Self {
            min_ratio: DEFAULT_MIN_RATIO,
            max_ratio: DEFAULT_MAX_RATIO,
        }
    }
}

impl LengthBand {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_ratio > 0.0 && self.min_ratio <= self.max_ratio && self.max_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "invalid length band [{}, {}]",
                self.min_ratio, self.max_ratio
            )));
        }
        Ok(())
    }

    /// Inclusive frame-length bounds for a query of `lq` frames. A relative
    /// slack of 1e-9 absorbs representation error in ratios such as 2/3.
    pub fn bounds(&self, lq: usize) -> (usize, usize) {
        let l = lq as f64;
        let lo = (self.min_ratio * l * (1.0 - 1e-9)).ceil() as usize;
        let hi = (self.max_ratio * l * (1.0 + 1e-9)).floor() as usize;
        (lo, hi)
    }
}

/// Segments of one length, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
struct LengthGroup {
    length: usize,
    /// `(utterance index, start)` per segment.
    records: Vec<(u32, u32)>,
    /// `records.len() * dim` unit-norm values.
    embeddings: Vec<f32>,
}

/// Pooled, unit-normalized window embeddings of a search collection, grouped
/// by window length.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentIndex {
    fingerprint: [u8; 32],
    dim: usize,
    utterances: Vec<String>,
    groups: Vec<LengthGroup>,
}

/// One indexed segment, as yielded by [`SegmentIndex::segments`].
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedSegment<'a> {
    pub utterance_id: &'a str,
    pub start: usize,
    pub length: usize,
    pub embedding: &'a [f32],
}

fn unit_f32(v: &[f64]) -> Result<Vec<f32>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(v.iter().map(|x| (x / n) as f32).collect())
}

fn dot32(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SegmentIndex {
    /// One encoder pass per utterance; utterances shorter than the smallest
    /// window are skipped with a warning but still receive floor scores.
    pub fn build(collection: &[FeatureMatrix], model: &EmbeddingModel, lattice: &WindowLattice) -> Result<Self> {
        let mut order: Vec<&FeatureMatrix> = collection.iter().collect();
        order.sort_by(|a, b| a.utterance_id().cmp(b.utterance_id()));
        if let Some(w) = order.windows(2).find(|w| w[0].utterance_id() == w[1].utterance_id()) {
            return Err(Error::Duplicate(format!("utterance {}", w[0].utterance_id())));
        }
        let per_utt: Vec<Vec<(usize, usize, Vec<f32>)>> = order
            .par_iter()
            .map(|x| {
                let windows = enumerate_windows(x.frames(), lattice);
                if windows.is_empty() {
                    log::warn!(
                        "utterance {} has {} frames, shorter than the smallest window; not indexed",
                        x.utterance_id(),
                        x.frames()
                    );
                    return Ok(Vec::new());
                }
                let states = model.encode_utterance(x)?;
                windows
                    .into_iter()
                    .map(|(s, w)| Ok((s, w, unit_f32(&states.pool(s, s + w - 1, model.pooling())?)?)))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let dim = model.embedding_dim();
        let mut groups: BTreeMap<usize, LengthGroup> = BTreeMap::new();
        for (u, segs) in per_utt.into_iter().enumerate() {
            for (s, w, e) in segs {
                let g = groups.entry(w).or_insert_with(|| LengthGroup {
                    length: w,
                    records: Vec::new(),
                    embeddings: Vec::new(),
                });
                g.records.push((u as u32, s as u32));
                g.embeddings.extend(e);
            }
        }
        Ok(Self {
            fingerprint: fingerprint(model),
            dim,
            utterances: order.iter().map(|x| x.utterance_id().to_owned()).collect(),
            groups: groups.into_values().collect(),
        })
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn utterances(&self) -> &[String] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.records.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All segments in storage order (by length, then utterance, then start).
    pub fn segments(&self) -> impl Iterator<Item = IndexedSegment<'_>> {
        self.groups.iter().flat_map(move |g| {
            g.records.iter().enumerate().map(move |(i, &(u, s))| IndexedSegment {
                utterance_id: &self.utterances[u as usize],
                start: s as usize,
                length: g.length,
                embedding: &g.embeddings[i * self.dim..(i + 1) * self.dim],
            })
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(INDEX_MAGIC);
        w.bytes(&self.fingerprint);
        w.u32(self.dim as u32);
        w.u32(self.utterances.len() as u32);
        for u in &self.utterances {
            w.string(u);
        }
        w.u32(self.len() as u32);
        for g in &self.groups {
            for (i, &(u, s)) in g.records.iter().enumerate() {
                w.u32(u);
                w.u32(s);
                w.u32(g.length as u32);
                for &v in &g.embeddings[i * self.dim..(i + 1) * self.dim] {
                    w.f32(v);
                }
            }
        }
        w.buf
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, path);
        if r.take(4, "magic")? != INDEX_MAGIC {
            return Err(r.error(0, "bad magic, expected \"IDX1\""));
        }
        let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().expect("32 bytes");
        let dim = r.u32("dimension")? as usize;
        let n_utts = r.u32("utterance count")? as usize;
        let utterances = (0..n_utts).map(|_| r.string("utterance id")).collect::<Result<Vec<_>>>()?;
        let count = r.u32("segment count")? as usize;
        let mut groups: Vec<LengthGroup> = Vec::new();
        for _ in 0..count {
            let at = r.offset();
            let u = r.u32("utterance reference")?;
            let s = r.u32("start")?;
            let len = r.u32("length")? as usize;
            if u as usize >= utterances.len() {
                return Err(r.error(at, format!("utterance reference {u} out of range")));
            }
            let fresh = groups.last().is_none_or(|g| g.length != len);
            if fresh {
                if groups.last().is_some_and(|g| g.length > len) {
                    return Err(r.error(at, "segments not grouped by increasing length"));
                }
                groups.push(LengthGroup {
                    length: len,
                    records: Vec::new(),
                    embeddings: Vec::new(),
                });
            }
            let g = groups.last_mut().expect("group pushed");
            g.records.push((u, s));
            for _ in 0..dim {
                g.embeddings.push(r.f32("embedding")?);
            }
        }
        r.finish()?;
        Ok(Self {
            fingerprint,
            dim,
            utterances,
            groups,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&read_bytes(path)?, path)
    }
}

/// A query embedded by a particular model.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub query_id: String,
    pub frames: usize,
    pub embedding: Vec<f32>,
    pub fingerprint: [u8; 32],
}

impl QueryEmbedding {
    pub fn new(model: &EmbeddingModel, query: &FeatureMatrix) -> Result<Self> {
        Self::with_fingerprint(model, query, fingerprint(model))
    }

    /// As [`QueryEmbedding::new`] with a precomputed model fingerprint.
    pub fn with_fingerprint(model: &EmbeddingModel, query: &FeatureMatrix, fingerprint: [u8; 32]) -> Result<Self> {
        Ok(Self {
            query_id: query.utterance_id().to_owned(),
            frames: query.frames(),
            embedding: unit_f32(&model.embed_whole(query)?)?,
            fingerprint,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub band: LengthBand,
    pub floor: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            band: LengthBand::default(),
            floor: DEFAULT_FLOOR,
        }
    }
}

/// Per-utterance scores of one query plus the number of segments compared.
pub fn score_query(query: &QueryEmbedding, index: &SegmentIndex, config: &SearchConfig) -> Result<(Vec<ScoreEntry>, usize)> {
    config.band.validate()?;
    if query.fingerprint != index.fingerprint {
        return Err(Error::FingerprintMismatch);
    }
    if index.utterances.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if query.embedding.len() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            actual: query.embedding.len(),
        });
    }
    let (lo, hi) = config.band.bounds(query.frames);
    let mut best = vec![f32::NEG_INFINITY; index.utterances.len()];
    let mut compared = 0;
    for g in index.groups.iter().filter(|g| (lo..=hi).contains(&g.length)) {
        for (rec, emb) in g.records.iter().zip(g.embeddings.chunks_exact(index.dim)) {
            let s = dot32(&query.embedding, emb);
            let slot = &mut best[rec.0 as usize];
            if s > *slot {
                *slot = s;
            }
        }
        compared += g.records.len();
    }
    let entries = index
        .utterances
        .iter()
        .zip(best)
        .map(|(u, s)| ScoreEntry {
            query_id: query.query_id.clone(),
            utterance_id: u.clone(),
            score: if s == f32::NEG_INFINITY { config.floor } else { s as f64 },
        })
        .collect();
    Ok((entries, compared))
}

/// Embeds and scores every query.
pub fn search(
    model: &EmbeddingModel,
    queries: &[FeatureMatrix],
    index: &SegmentIndex,
    config: &SearchConfig,
) -> Result<ScoreTable> {
    let fp = fingerprint(model);
    let rows = queries
        .par_iter()
        .map(|q| score_query(&QueryEmbedding::with_fingerprint(model, q, fp)?, index, config).map(|(e, _)| e))
        .collect::<Result<Vec<_>>>()?;
    ScoreTable::new(rows.into_iter().flatten().collect())
}

/// Elementwise sum of score tables with identical key sets; the row order of
/// the first table is kept.
pub fn fuse_scores(tables: &[ScoreTable]) -> Result<ScoreTable> {
    let (first, rest) = tables
        .split_first()
        .ok_or_else(|| Error::KeyMismatch("no score tables to fuse".into()))?;
    let lookups: Vec<_> = rest.iter().map(ScoreTable::lookup).collect();
    let mut entries = Vec::with_capacity(first.len());
    for e in first.entries() {
        let mut score = e.score;
        for (i, l) in lookups.iter().enumerate() {
            score += l.get(&(e.query_id.as_str(), e.utterance_id.as_str())).ok_or_else(|| {
                Error::KeyMismatch(format!(
                    "table {} has no score for ({}, {})",
                    i + 2,
                    e.query_id,
                    e.utterance_id
                ))
            })?;
        }
        entries.push(ScoreEntry { score, ..e.clone() });
    }
    for (i, t) in rest.iter().enumerate() {
        if t.len() != first.len() {
            return Err(Error::KeyMismatch(format!(
                "table {} has {} rows, table 1 has {}",
                i + 2,
                t.len(),
                first.len()
            )));
        }
    }
    ScoreTable::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lattice_has_22_sizes() {
        let s = default_sizes();
        assert_eq!(s.len(), 22);
        assert_eq!(&s[..8], &[12, 15, 18, 21, 24, 27, 30, 36]);
        assert_eq!(*s.last().unwrap(), 120);
    }

    #[test]
    fn window_enumeration() {
        let lat = WindowLattice::default();
        let w = enumerate_windows(30, &lat);
        assert_eq!(w.len(), 17);
        let mut counts = BTreeMap::new();
        for (_, l) in &w {
            *counts.entry(*l).or_insert(0) += 1;
        }
        assert_eq!(counts.into_iter().collect::<Vec<_>>(), vec![(12, 4), (15, 4), (18, 3), (21, 2), (24, 2), (27, 1), (30, 1)]);
        assert!(enumerate_windows(11, &lat).is_empty());
        let w120: Vec<_> = enumerate_windows(120, &lat).into_iter().filter(|w| w.1 == 120).collect();
        assert_eq!(w120, vec![(0, 120)]);
    }

    #[test]
    fn band_for_thirty_frames() {
        let (lo, hi) = LengthBand::default().bounds(30);
        assert_eq!((lo, hi), (20, 40));
        let admitted: Vec<usize> = default_sizes().into_iter().filter(|s| (lo..=hi).contains(s)).collect();
        assert_eq!(admitted, vec![21, 24, 27, 30, 36]);
    }

    #[test]
    fn bad_lattices() {
        assert!(WindowLattice::new(vec![12, 12], 5).is_err());
        assert!(WindowLattice::new(vec![12, 15], 0).is_err());
        assert!(WindowLattice::new(vec![], 5).is_err());
    }

    fn table(rows: &[(&str, &str, f64)]) -> ScoreTable {
        ScoreTable::new(
            rows.iter()
                .map(|&(q, u, s)| ScoreEntry {
                    query_id: q.into(),
                    utterance_id: u.into(),
                    score: s,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fusion() {
        let a = table(&[("q", "u1", 0.2), ("q", "u2", 0.5)]);
        let b = table(&[("q", "u2", 0.1), ("q", "u1", 0.3)]);
        let f = fuse_scores(&[a.clone(), b.clone()]).unwrap();
        let l = f.lookup();
        assert!((l[&("q", "u1")] - 0.5).abs() < 1e-12);
        assert!((l[&("q", "u2")] - 0.6).abs() < 1e-12);
        assert_eq!(fuse_scores(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(fuse_scores(&[b.clone(), a.clone()]).unwrap().lookup(), f.lookup());
        let c = table(&[("q", "u1", 0.2), ("q", "u3", 0.5)]);
        assert!(matches!(fuse_scores(&[a.clone(), c]), Err(Error::KeyMismatch(_))));
        let d = table(&[("q", "u1", 0.2), ("q", "u2", 0.5), ("q", "u3", 0.5)]);
        assert!(matches!(fuse_scores(&[a, d]), Err(Error::KeyMismatch(_))));
    }
}
