use qbe_core::eval::{ScoredTrial, TwvPoint};
use qbe_core::search::{QueryEmbedding, SegmentIndex};

/// `1 - <a/|a|, b/|b|>`, normalizing first.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ua: Vec<f64> = a.iter().map(|v| v / na).collect();
    let ub: Vec<f64> = b.iter().map(|v| v / nb).collect();
    1.0 - ua.iter().zip(&ub).map(|(x, y)| x * y).sum::<f64>()
}

/// Sorts every candidate by (distance, index), keeps those beyond the
/// positive, falls back to all candidates, truncates to `k`.
pub fn select(positive: f64, candidates: &[(usize, f64)], k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = candidates.to_vec();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let beyond: Vec<(usize, f64)> = order.iter().copied().filter(|c| c.1 > positive).collect();
    let mut picked = if beyond.is_empty() { order } else { beyond };
    picked.truncate(k);
    picked
}

pub fn objective_oracle(f: &[Vec<f64>], labels: &[usize], g: &[Vec<f64>], margin: f64, k: usize) -> f64 {
    let mut loss = 0.0;
    for (i, &v) in labels.iter().enumerate() {
        let positive = distance(&f[i], &g[v]);
        let written: Vec<usize> = (0..g.len()).filter(|&w| w != v).collect();
        let terms = [
            written.iter().map(|&w| (w, distance(&f[i], &g[w]))).collect::<Vec<_>>(),
            written.iter().map(|&w| (w, distance(&g[v], &g[w]))).collect(),
            (0..f.len())
                .filter(|&j| labels[j] != v)
                .map(|j| (j, distance(&f[j], &g[v])))
                .collect(),
        ];
        for cands in terms {
            let picked = select(positive, &cands, k);
            let sum: f64 = picked.iter().map(|&(_, d)| (margin + positive - d).max(0.0)).sum();
            loss += sum / picked.len() as f64;
        }
    }
    loss
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn local(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Enumerates every monotone unit-step path from (0, 0) to the far corner
/// and returns the cost/length of the lexicographically smallest
/// (cost, length) path.
pub fn dtw_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let ua: Vec<Vec<f64>> = a.iter().map(|r| unit(r)).collect();
    let ub: Vec<Vec<f64>> = b.iter().map(|r| unit(r)).collect();
    let (n, m) = (ua.len(), ub.len());
    let mut best = (f64::INFINITY, usize::MAX);
    let mut stack = vec![(0usize, 0usize, local(&ua[0], &ub[0]), 1usize)];
    while let Some((i, j, cost, len)) = stack.pop() {
        if i == n - 1 && j == m - 1 {
            if cost < best.0 || (cost == best.0 && len < best.1) {
                best = (cost, len);
            }
            continue;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < n && nj < m {
                stack.push((ni, nj, cost + local(&ua[ni], &ub[nj]), len + 1));
            }
        }
    }
    best.0 / best.1 as f64
}

/// Recomputes every point of the curve from scratch at each threshold.
pub fn twv_oracle(trials: &[ScoredTrial], beta: f64) -> Vec<TwvPoint> {
    let mut queries: Vec<&str> = Vec::new();
    for t in trials {
        if !queries.contains(&t.query_id.as_str()) {
            queries.push(&t.query_id);
        }
    }
    let mut thetas: Vec<f64> = trials.iter().map(|t| t.score).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    thetas.insert(0, f64::NEG_INFINITY);
    thetas.push(f64::INFINITY);
    thetas
        .into_iter()
        .map(|theta| {
            let (mut miss_sum, mut miss_n, mut fa_sum, mut fa_n) = (0.0, 0, 0.0, 0);
            for q in &queries {
                let mine: Vec<&ScoredTrial> = trials.iter().filter(|t| t.query_id == *q).collect();
                let pos = mine.iter().filter(|t| t.relevant).count();
                let neg = mine.len() - pos;
                if pos > 0 {
                    let missed = mine.iter().filter(|t| t.relevant && t.score <= theta).count();
                    miss_sum += missed as f64 / pos as f64;
                    miss_n += 1;
                }
                if neg > 0 {
                    let accepted = mine.iter().filter(|t| !t.relevant && t.score > theta).count();
                    fa_sum += accepted as f64 / neg as f64;
                    fa_n += 1;
                }
            }
            let p_miss = if miss_n == 0 { 0.0 } else { miss_sum / miss_n as f64 };
            let p_fa = if fa_n == 0 { 0.0 } else { fa_sum / fa_n as f64 };
            TwvPoint {
                theta,
                p_miss,
                p_fa,
                twv: 1.0 - (p_miss + beta * p_fa),
            }
        })
        .collect()
}

/// Normalized cross entropy at (slope, offset), written out directly.
pub fn cnxe_at(scores: &[f64], labels: &[bool], slope: f64, offset: f64) -> f64 {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
    let pi = labels.iter().filter(|&&y| y).count() as f64 / n;
    let h = -(pi * pi.ln() + (1.0 - pi) * (1.0 - pi).ln());
    let mut ce = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        let z = if sd > 0.0 { (s - mean) / sd } else { 0.0 };
        let a = slope * z + offset;
        // -ln sigmoid(a) for targets, -ln(1 - sigmoid(a)) otherwise
        let x = if y { -a } else { a };
        ce += if x > 0.0 { x + (1.0 + (-x).exp()).ln() } else { (1.0 + x.exp()).ln() };
    }
    ce / n / h
}

/// Minimum of a convex function on [lo, hi] by ternary search.
pub fn ternary(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi))
}

/// The calibration loss is jointly convex in (slope, offset), so nested
/// one-dimensional ternary searches find the box minimum.
pub fn cnxe_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    ternary(0.0, 50.0, |a| ternary(-25.0, 25.0, |b| cnxe_at(scores, labels, a, b)))
}

/// Best dot product over every indexed segment whose length `l` satisfies
/// `2 lq <= 3 l <= 4 lq`, in exact integer arithmetic.
pub fn search_oracle(q: &QueryEmbedding, index: &SegmentIndex) -> (Vec<(String, f64)>, usize) {
    let mut compared = 0;
    let scores = index
        .utterances()
        .iter()
        .map(|u| {
            let mut best: Option<f32> = None;
            for seg in index.segments().filter(|s| s.utterance_id == u) {
                if 2 * q.frames <= 3 * seg.length && 3 * seg.length <= 4 * q.frames {
                    compared += 1;
                    let mut s = 0.0f32;
                    for (a, b) in q.embedding.iter().zip(seg.embedding) {
                        s += a * b;
                    }
                    best = Some(best.map_or(s, |b| b.max(s)));
                }
            }
            (u.clone(), best.map_or(-1.0, f64::from))
        })
        .collect();
    (scores, compared)
}

