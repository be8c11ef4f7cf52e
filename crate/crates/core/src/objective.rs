//! Multi-view contrastive objective with semi-hard top-k negative mining.
//!
//! For an acoustic segment `X` with label `v`, the positive distance is
//! `d(f(X), g(v))` and three hinge terms contrast it with negatives:
//!
//! * term 0: written negatives `g(v')` seen from `f(X)`,
//! * term 1: written negatives `g(v')` seen from `g(v)`,
//! * term 2: acoustic negatives `f(X')` (label differs from `v`) seen from `g(v)`.
//!
//! Negatives are restricted to the batch. Each term averages
//! `[margin + positive - negative]_+` over the `k` closest negatives that are
//! farther than the positive, or over the `k` closest overall when no such
//! negative exists.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::encoder::EmbeddingGradients;
use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 0.4;
pub const DEFAULT_K_START: usize = 64;
pub const DEFAULT_K_END: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    pub margin: f64,
    pub k: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            k: DEFAULT_K_END,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(())
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 - a.b / (|a| |b|)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(1.0 - dot(a, b) / (na * nb))
}

/// Indices of at most `k` negatives for an anchor at `anchor_distance`:
/// the closest candidates strictly farther than the anchor, or the closest
/// candidates overall if none is farther. Ordered by distance, ties by index.
pub fn mine_semi_hard(anchor_distance: f64, candidate_distances: &[f64], k: usize) -> Result<Vec<usize>> {
    if candidate_distances.is_empty() {
        return Err(Error::DegenerateBatch("no negative candidates".into()));
    }
    let semi_hard = top_k(candidate_distances, k, |d| d > anchor_distance);
    if !semi_hard.is_empty() {
        return Ok(semi_hard);
    }
    Ok(top_k(candidate_distances, k, |_| true))
}

#[derive(PartialEq)]
struct Ranked(f64, usize);

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Bounded max-heap selection of the `k` smallest `(distance, index)` pairs.
fn top_k(distances: &[f64], k: usize, keep: impl Fn(f64) -> bool) -> Vec<usize> {
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (i, &d) in distances.iter().enumerate() {
        if !keep(d) {
            continue;
        }
        let item = Ranked(d, i);
        if heap.len() < k {
            heap.push(item);
        } else if heap.peek().is_some_and(|worst| item < *worst) {
            heap.pop();
            heap.push(item);
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    /// Written negatives measured from the acoustic embedding.
    AcousticToWritten = 0,
    /// Written negatives measured from the written embedding.
    WrittenToWritten = 1,
    /// Acoustic negatives measured from the written embedding.
    WrittenToAcoustic = 2,
}

impl Term {
    pub const ALL: [Term; 3] = [Term::AcousticToWritten, Term::WrittenToWritten, Term::WrittenToAcoustic];
}

/// Embeddings of one batch: acoustic segment `i` carries label
/// `labels[i]`, an index into `written` (one row per unique batch label).
#[derive(Debug, Clone, Copy)]
pub struct EmbeddedBatch<'a> {
    pub acoustic: &'a [Vec<f64>],
    pub labels: &'a [usize],
    pub written: &'a [Vec<f64>],
}

/// Unit vectors and cached pairwise distances.
struct Geometry {
    f_unit: Vec<Vec<f64>>,
    f_norm: Vec<f64>,
    g_unit: Vec<Vec<f64>>,
    g_norm: Vec<f64>,
    /// `d(f_i, g_v)`, `[N][V]`
    fg: Vec<Vec<f64>>,
    /// `d(g_v, g_w)`, `[V][V]`
    gg: Vec<Vec<f64>>,
}

fn unit(a: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = norm(a);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((a.iter().map(|v| v / n).collect(), n))
}

impl Geometry {
    fn new(batch: &EmbeddedBatch<'_>) -> Result<Self> {
        if batch.acoustic.len() != batch.labels.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.acoustic.len(),
                actual: batch.labels.len(),
            });
        }
        if let Some(&bad) = batch.labels.iter().find(|&&v| v >= batch.written.len()) {
            return Err(Error::Config(format!("label index {bad} outside the batch vocabulary")));
        }
        if batch.written.len() < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batch vocabulary has {} label(s)",
                batch.written.len()
            )));
        }
        let (f_unit, f_norm): (Vec<_>, Vec<_>) = batch.acoustic.iter().map(|a| unit(a)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let (g_unit, g_norm): (Vec<_>, Vec<_>) = batch.written.iter().map(|a| unit(a)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let fg = f_unit
            .iter()
            .map(|f| g_unit.iter().map(|g| 1.0 - dot(f, g)).collect())
            .collect();
        let gg = g_unit
            .iter()
            .map(|a| g_unit.iter().map(|b| 1.0 - dot(a, b)).collect())
            .collect();
        Ok(Self {
            f_unit,
            f_norm,
            g_unit,
            g_norm,
            fg,
            gg,
        })
    }
}

/// One mined hinge: negative index (label or acoustic segment) and the
/// negative distance.
struct Mined {
    negatives: Vec<(usize, f64)>,
    positive: f64,
}

fn mine_term(geo: &Geometry, batch: &EmbeddedBatch<'_>, term: Term, pair: usize, k: usize) -> Result<Mined> {
    let v = batch.labels[pair];
    let positive = geo.fg[pair][v];
    let (ids, dists): (Vec<usize>, Vec<f64>) = match term {
        Term::AcousticToWritten => (0..batch.written.len())
            .filter(|&w| w != v)
            .map(|w| (w, geo.fg[pair][w]))
            .unzip(),
        Term::WrittenToWritten => (0..batch.written.len())
            .filter(|&w| w != v)
            .map(|w| (w, geo.gg[v][w]))
            .unzip(),
        Term::WrittenToAcoustic => (0..batch.acoustic.len())
            .filter(|&j| batch.labels[j] != v)
            .map(|j| (j, geo.fg[j][v]))
            .unzip(),
    };
    let picked = mine_semi_hard(positive, &dists, k)?;
    Ok(Mined {
        negatives: picked.into_iter().map(|i| (ids[i], dists[i])).collect(),
        positive,
    })
}

fn hinge_mean(mined: &Mined, margin: f64) -> f64 {
    let total: f64 = mined
        .negatives
        .iter()
        .map(|&(_, d)| (margin + mined.positive - d).max(0.0))
        .sum();
    total / mined.negatives.len() as f64
}

/// Loss of a single term for acoustic segment `pair`.
pub fn term_loss(term: Term, pair: usize, batch: &EmbeddedBatch<'_>, config: &MiningConfig) -> Result<f64> {
    config.validate()?;
    let geo = Geometry::new(batch)?;
    Ok(hinge_mean(&mine_term(&geo, batch, term, pair, config.k)?, config.margin))
}

/// Sum over segments and the three terms.
pub fn batch_objective(batch: &EmbeddedBatch<'_>, config: &MiningConfig) -> Result<f64> {
    Ok(batch_objective_with_gradients(batch, config)?.loss)
}

/// Adds `coef * d/da d(a, b)` and `coef * d/db d(a, b)` for cosine distance.
fn accumulate_cosine(
    coef: f64,
    a_unit: &[f64],
    a_norm: f64,
    b_unit: &[f64],
    b_norm: f64,
    da: &mut [f64],
    db: &mut [f64],
) {
    let cos = dot(a_unit, b_unit);
    for k in 0..a_unit.len() {
        da[k] -= coef * (b_unit[k] - cos * a_unit[k]) / a_norm;
        db[k] -= coef * (a_unit[k] - cos * b_unit[k]) / b_norm;
    }
}

/// Objective value and its gradient with respect to every embedding.
/// Mining decisions are treated as constants.
pub fn batch_objective_with_gradients(batch: &EmbeddedBatch<'_>, config: &MiningConfig) -> Result<EmbeddingGradients> {
    config.validate()?;
    let geo = Geometry::new(batch)?;
    let n = batch.acoustic.len();
    let nv = batch.written.len();
    // coefficients of dL/d(distance)
    let mut c_fg = vec![vec![0.0; nv]; n];
    let mut c_gg = vec![vec![0.0; nv]; nv];
    let mut loss = 0.0;
    for pair in 0..n {
        let v = batch.labels[pair];
        for term in Term::ALL {
            let mined = mine_term(&geo, batch, term, pair, config.k)?;
            loss += hinge_mean(&mined, config.margin);
            let scale = 1.0 / mined.negatives.len() as f64;
            for &(neg, d) in &mined.negatives {
                if config.margin + mined.positive - d <= 0.0 {
                    continue;
                }
                c_fg[pair][v] += scale;
                match term {
                    Term::AcousticToWritten => c_fg[pair][neg] -= scale,
                    Term::WrittenToWritten => c_gg[v][neg] -= scale,
                    Term::WrittenToAcoustic => c_fg[neg][v] -= scale,
                }
            }
        }
    }

    let dim = batch.acoustic.first().map_or(0, Vec::len);
    let mut d_acoustic = vec![vec![0.0; dim]; n];
    let mut d_written = vec![vec![0.0; dim]; nv];
    for i in 0..n {
        for v in 0..nv {
            let c = c_fg[i][v];
            if c != 0.0 {
                let (df, dg) = (&mut d_acoustic[i], &mut d_written[v]);
                accumulate_cosine(c, &geo.f_unit[i], geo.f_norm[i], &geo.g_unit[v], geo.g_norm[v], df, dg);
            }
        }
    }
    for v in 0..nv {
        for w in 0..nv {
            let c = c_gg[v][w];
            if c != 0.0 {
                let mut da = vec![0.0; dim];
                let mut db = vec![0.0; dim];
                accumulate_cosine(c, &geo.g_unit[v], geo.g_norm[v], &geo.g_unit[w], geo.g_norm[w], &mut da, &mut db);
                for k in 0..dim {
                    d_written[v][k] += da[k];
                    d_written[w][k] += db[k];
                }
            }
        }
    }
    Ok(EmbeddingGradients {
        loss,
        d_acoustic,
        d_written,
    })
}
