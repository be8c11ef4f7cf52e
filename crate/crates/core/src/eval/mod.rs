//! Detection metrics (minimum normalized cross entropy, maximum term-weighted
//! value), same/different average precision and runtime benchmarks.

mod bench;
mod cnxe;
mod discrimination;
mod trials;
mod twv;

pub use bench::{bench_dtw, bench_embedding, Backend, BenchResult};
pub use cnxe::{min_cnxe, softplus, standardize, Calibration, OFFSET_RANGE, SLOPE_RANGE};
pub use discrimination::{
    average_precision, embed_tokens, same_different_ap, same_different_eval, word_tokens, DiscriminationReport,
    PairScoring, WordToken,
};
pub use trials::{ScoredTrial, TrialSet};
pub use twv::{max_twv, twv_curve, TwvPoint, DEFAULT_BETA};

use crate::corpus::{GroundTruth, ScoreTable};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TagMetrics {
    pub tag: String,
    pub trials: usize,
    pub min_cnxe: f64,
    pub max_twv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub min_cnxe: f64,
    pub max_twv: f64,
    pub beta: f64,
    pub per_tag: Vec<TagMetrics>,
}

impl MetricReport {
    /// Header and overall line, then one `tag=<tag>` line per sub-task.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "min_cnxe\tmax_twv\tbeta\n{:.6}\t{:.6}\t{}\n",
            self.min_cnxe, self.max_twv, self.beta
        );
        for t in &self.per_tag {
            out.push_str(&format!("tag={}\t{:.6}\t{:.6}\t{}\n", t.tag, t.min_cnxe, t.max_twv, t.trials));
        }
        out
    }
}

pub fn evaluate_trials(trials: &TrialSet, beta: f64) -> MetricReport {
    let mut per_tag = Vec::new();
    for tag in trials.tags() {
        match trials.with_tag(tag) {
            Ok(sub) => per_tag.push(TagMetrics {
                tag: tag.to_owned(),
                trials: sub.len(),
                min_cnxe: min_cnxe(&sub),
                max_twv: max_twv(&sub, beta),
            }),
            Err(e) => log::warn!("no metrics for sub-task {tag}: {e}"),
        }
    }
    MetricReport {
        min_cnxe: min_cnxe(trials),
        max_twv: max_twv(trials, beta),
        beta,
        per_tag,
    }
}

pub fn evaluate(scores: &ScoreTable, truth: &GroundTruth, beta: f64) -> Result<MetricReport> {
    Ok(evaluate_trials(&TrialSet::join(scores, truth)?, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(rows: &[(&str, f64, bool)]) -> TrialSet {
        TrialSet::new(
            rows.iter()
                .map(|&(q, s, r)| ScoredTrial {
                    query_id: q.into(),
                    score: s,
                    relevant: r,
                    tag: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[(0.9, true), (0.8, true), (0.1, false)]).unwrap(), 1.0);
        let ap = average_precision(&[(0.9, true), (0.5, false), (0.2, true)]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&[(0.3, true)]).unwrap(), 1.0);
        assert!(average_precision(&[(0.3, false)]).is_err());
        // ties keep input order
        assert_eq!(average_precision(&[(0.5, false), (0.5, true)]).unwrap(), 0.5);
    }

    #[test]
    fn separable_scores() {
        let t = trials(&[("q", 0.9, true), ("q", 0.8, true), ("q", 0.3, false), ("r", 0.7, true), ("r", 0.1, false)]);
        assert_eq!(max_twv(&t, DEFAULT_BETA), 1.0);
        assert!(min_cnxe(&t) <= 0.05);
    }

    #[test]
    fn constant_scores() {
        let t = trials(&[("q", 0.5, true), ("q", 0.5, false), ("q", 0.5, false), ("r", 0.5, true), ("r", 0.5, false)]);
        assert!((min_cnxe(&t) - 1.0).abs() < 1e-3);
        let curve = twv_curve(&t, DEFAULT_BETA);
        let last = curve.last().unwrap();
        assert_eq!(last.theta, f64::INFINITY);
        assert_eq!(last.twv, 0.0);
        assert_eq!(max_twv(&t, DEFAULT_BETA), 0.0);
    }

    #[test]
    fn twv_hand_example() {
        let t = trials(&[("q", 0.9, true), ("q", 0.4, true), ("q", 0.5, false), ("q", 0.1, false)]);
        let curve = twv_curve(&t, 2.0);
        // theta = 0.4: accept {0.9, 0.5}: one miss of two, one false alarm of two
        let p = curve.iter().find(|p| p.theta == 0.4).unwrap();
        assert_eq!((p.p_miss, p.p_fa), (0.5, 0.5));
        assert_eq!(p.twv, 1.0 - (0.5 + 2.0 * 0.5));
        // theta = 0.5: accept only 0.9
        let p = curve.iter().find(|p| p.theta == 0.5).unwrap();
        assert_eq!((p.p_miss, p.p_fa, p.twv), (0.5, 0.0, 0.5));
        assert_eq!(max_twv(&t, 2.0), 0.5);
        assert_eq!(curve.len(), 6);
    }

    #[test]
    fn invalid_trial_sets() {
        let one_class = vec![ScoredTrial {
            query_id: "q".into(),
            score: 0.1,
            relevant: true,
            tag: None,
        }];
        assert!(TrialSet::new(one_class).is_err());
    }
}
