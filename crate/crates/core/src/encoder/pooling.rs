use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduction of per-frame states over a window `[s, e]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Average of the states in the window.
    Mean,
    /// Forward half of the state at `e` followed by the backward half at `s`.
    Concat,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "concat" => Ok(Pooling::Concat),
            other => Err(Error::Config(format!("unknown pooling {other:?} (mean|concat)"))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Concat => "concat",
        })
    }
}

fn check_window(steps: usize, start: usize, end: usize) -> Result<()> {
    if start > end || end >= steps {
        return Err(Error::WindowOutOfRange {
            start,
            end,
            frames: steps,
        });
    }
    Ok(())
}

/// Pools rows `start..=end` of a `[steps, dim]` state matrix whose rows are
/// `[forward ; backward]` halves.
pub fn pool(states: &[f64], dim: usize, start: usize, end: usize, mode: Pooling) -> Result<Vec<f64>> {
    let steps = states.len() / dim;
    check_window(steps, start, end)?;
    let half = dim / 2;
    Ok(match mode {
        Pooling::Mean => {
            let mut out = vec![0.0; dim];
            for row in states[start * dim..(end + 1) * dim].chunks_exact(dim) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            let scale = 1.0 / (end - start + 1) as f64;
            out.iter_mut().for_each(|v| *v *= scale);
            out
        }
        Pooling::Concat => {
            let mut out = Vec::with_capacity(dim);
            out.extend_from_slice(&states[end * dim..end * dim + half]);
            out.extend_from_slice(&states[start * dim + half..(start + 1) * dim]);
            out
        }
    })
}

/// Adds the gradient of [`pool`] with respect to the states into `d_states`.
pub fn pool_backward(d_pooled: &[f64], d_states: &mut [f64], dim: usize, start: usize, end: usize, mode: Pooling) {
    let half = dim / 2;
    match mode {
        Pooling::Mean => {
            let scale = 1.0 / (end - start + 1) as f64;
            for row in d_states[start * dim..(end + 1) * dim].chunks_exact_mut(dim) {
                for (d, g) in row.iter_mut().zip(d_pooled) {
                    *d += g * scale;
                }
            }
        }
        Pooling::Concat => {
            for k in 0..half {
                d_states[end * dim + k] += d_pooled[k];
                d_states[start * dim + half + k] += d_pooled[half + k];
            }
        }
    }
}
