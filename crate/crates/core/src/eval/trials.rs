use std::collections::{BTreeSet, HashMap};

use crate::corpus::{GroundTruth, ScoreTable};
use crate::error::{Error, Result};

/// A detection score joined with its relevance label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub query_id: String,
    pub score: f64,
    pub relevant: bool,
    pub tag: Option<String>,
}

/// Trials with finite scores and at least one relevant and one irrelevant
/// trial overall.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    trials: Vec<ScoredTrial>,
}

impl TrialSet {
    pub fn new(trials: Vec<ScoredTrial>) -> Result<Self> {
        if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
            return Err(Error::InvalidTrials(format!(
                "non-finite score {} for query {}",
                t.score, t.query_id
            )));
        }
        let positives = trials.iter().filter(|t| t.relevant).count();
        if positives == 0 || positives == trials.len() {
            return Err(Error::InvalidTrials(format!(
                "{positives} relevant out of {} trials; need both classes",
                trials.len()
            )));
        }
        Ok(Self { trials })
    }

    /// One trial per ground-truth row; every row needs a score.
    pub fn join(scores: &ScoreTable, truth: &GroundTruth) -> Result<Self> {
        let lookup = scores.lookup();
        let mut trials = Vec::with_capacity(truth.len());
        for t in truth.trials() {
            let score = lookup
                .get(&(t.query_id.as_str(), t.utterance_id.as_str()))
                .ok_or_else(|| {
                    Error::InvalidTrials(format!("no score for trial ({}, {})", t.query_id, t.utterance_id))
                })?;
            trials.push(ScoredTrial {
                query_id: t.query_id.clone(),
                score: *score,
                relevant: t.relevant,
                tag: t.tag.clone(),
            });
        }
        if scores.len() > trials.len() {
            log::warn!("{} scored pairs have no ground truth and are ignored", scores.len() - trials.len());
        }
        Self::new(trials)
    }

    pub fn trials(&self) -> &[ScoredTrial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn tags(&self) -> BTreeSet<&str> {
        self.trials.iter().filter_map(|t| t.tag.as_deref()).collect()
    }

    pub fn with_tag(&self, tag: &str) -> Result<Self> {
        Self::new(
            self.trials
                .iter()
                .filter(|t| t.tag.as_deref() == Some(tag))
                .cloned()
                .collect(),
        )
    }

    /// Trial indices grouped by query, queries in first-appearance order.
    pub(crate) fn by_query(&self) -> Vec<Vec<usize>> {
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, t) in self.trials.iter().enumerate() {
            let g = *slot.entry(&t.query_id).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }
}
