//! Ground-truth trials and detection score tables.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

/// One `(query, utterance)` trial; `tag` is the optional sub-task column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub query_id: String,
    pub utterance_id: String,
    pub relevant: bool,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    trials: Vec<Trial>,
}

impl GroundTruth {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(trials.len());
        for t in &trials {
            if !seen.insert((t.query_id.as_str(), t.utterance_id.as_str())) {
                return Err(Error::Duplicate(format!("trial ({}, {})", t.query_id, t.utterance_id)));
            }
        }
        Ok(Self { trials })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut trials = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::parse(path, lineno, "expected `query<TAB>utterance<TAB>{0|1}[<TAB>tag]`"));
            }
            let relevant = match fields[2].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(path, lineno, format!("relevance must be 0 or 1, got {other:?}"))),
            };
            if !seen.insert((fields[0].to_owned(), fields[1].to_owned())) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("duplicate trial ({}, {})", fields[0], fields[1]),
                ));
            }
            trials.push(Trial {
                query_id: fields[0].to_owned(),
                utterance_id: fields[1].to_owned(),
                relevant,
                tag: fields.get(3).map(|t| t.trim().to_owned()).filter(|t| !t.is_empty()),
            });
        }
        Ok(Self { trials })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&format!("{}\t{}\t{}", t.query_id, t.utterance_id, u8::from(t.relevant)));
            if let Some(tag) = &t.tag {
                out.push('\t');
                out.push_str(tag);
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    GroundTruth::parse(&read_text(path)?, path)
}

pub fn write_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, truth.to_text().as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub query_id: String,
    pub utterance_id: String,
    pub score: f64,
}

/// Detection scores, at most one per `(query, utterance)` pair, in insertion
/// order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    entries: Vec<ScoreEntry>,
}

impl ScoreTable {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::InvalidTrials(format!(
                    "non-finite score for ({}, {})",
                    e.query_id, e.utterance_id
                )));
            }
            if !seen.insert((e.query_id.as_str(), e.utterance_id.as_str())) {
                return Err(Error::Duplicate(format!("score ({}, {})", e.query_id, e.utterance_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self) -> HashMap<(&str, &str), f64> {
        self.entries
            .iter()
            .map(|e| ((e.query_id.as_str(), e.utterance_id.as_str()), e.score))
            .collect()
    }

    /// Concatenates tables with disjoint keys (e.g. one per query).
    pub fn concat(tables: impl IntoIterator<Item = ScoreTable>) -> Result<Self> {
        Self::new(tables.into_iter().flat_map(|t| t.entries).collect())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, lineno, "expected `query<TAB>utterance<TAB>score`"));
            }
            let score: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("invalid score {:?}", fields[2])))?;
            entries.push(ScoreEntry {
                query_id: fields[0].to_owned(),
                utterance_id: fields[1].to_owned(),
                score,
            });
        }
        Self::new(entries).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    /// Renders scores with 6 decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{:.6}\n", e.query_id, e.utterance_id, e.score));
        }
        out
    }
}

pub fn write_scores(table: &ScoreTable, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, table.to_text().as_bytes())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    ScoreTable::parse(&read_text(path)?, path)
}
