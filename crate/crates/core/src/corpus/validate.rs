//! Non-aborting consistency check over features, alignment records and a
//! lexicon.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::{AlignmentRecord, FeatureMatrix, Lexicon};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateUtterance(String),
    FeatureDimension {
        utterance: String,
        expected: usize,
        actual: usize,
    },
    UnknownUtterance {
        line: usize,
        utterance: String,
    },
    UnknownWord {
        line: usize,
        word: String,
    },
    ReversedSegment {
        line: usize,
        utterance: String,
        start: usize,
        end: usize,
    },
    OutOfRange {
        line: usize,
        utterance: String,
        end: usize,
        frames: usize,
    },
    Overlap {
        utterance: String,
        first_line: usize,
        second_line: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateUtterance(u) => write!(f, "utterance {u} has more than one feature matrix"),
            Violation::FeatureDimension {
                utterance,
                expected,
                actual,
            } => write!(f, "utterance {utterance} has dimension {actual}, corpus uses {expected}"),
            Violation::UnknownUtterance { line, utterance } => {
                write!(f, "line {line}: unknown utterance {utterance}")
            }
            Violation::UnknownWord { line, word } => write!(f, "line {line}: word {word} not in lexicon"),
            Violation::ReversedSegment {
                line,
                utterance,
                start,
                end,
            } => write!(f, "line {line}: {utterance} segment starts at {start} after end {end}"),
            Violation::OutOfRange {
                line,
                utterance,
                end,
                frames,
            } => write!(f, "line {line}: {utterance} end frame {end} beyond {frames} frames"),
            Violation::Overlap {
                utterance,
                first_line,
                second_line,
            } => write!(f, "{utterance}: segments on lines {first_line} and {second_line} overlap"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_corpus(
    features: &[FeatureMatrix],
    records: &[AlignmentRecord],
    lexicon: &Lexicon,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut frames: HashMap<&str, usize> = HashMap::new();
    let expected_dim = features.first().map(FeatureMatrix::dim);
    for m in features {
        if frames.insert(m.utterance_id(), m.frames()).is_some() {
            violations.push(Violation::DuplicateUtterance(m.utterance_id().to_owned()));
        }
        if let Some(expected) = expected_dim.filter(|&d| d != m.dim()) {
            violations.push(Violation::FeatureDimension {
                utterance: m.utterance_id().to_owned(),
                expected,
                actual: m.dim(),
            });
        }
    }

    let mut per_utt: BTreeMap<&str, Vec<&AlignmentRecord>> = BTreeMap::new();
    for r in records {
        let seg = &r.segment;
        if !lexicon.contains(&seg.word) {
            violations.push(Violation::UnknownWord {
                line: r.line,
                word: seg.word.clone(),
            });
        }
        if seg.start > seg.end {
            violations.push(Violation::ReversedSegment {
                line: r.line,
                utterance: r.utterance_id.clone(),
                start: seg.start,
                end: seg.end,
            });
        }
        match frames.get(r.utterance_id.as_str()) {
            None => violations.push(Violation::UnknownUtterance {
                line: r.line,
                utterance: r.utterance_id.clone(),
            }),
            Some(&t) if seg.end >= t => violations.push(Violation::OutOfRange {
                line: r.line,
                utterance: r.utterance_id.clone(),
                end: seg.end,
                frames: t,
            }),
            Some(_) => {}
        }
        per_utt.entry(&r.utterance_id).or_default().push(r);
    }
    for (utt, mut recs) in per_utt {
        recs.sort_by_key(|r| (r.segment.start, r.segment.end, r.line));
        for pair in recs.windows(2) {
            if pair[0].segment.end >= pair[1].segment.start {
                violations.push(Violation::Overlap {
                    utterance: utt.to_owned(),
                    first_line: pair[0].line,
                    second_line: pair[1].line,
                });
            }
        }
    }
    ValidationReport { violations }
}
