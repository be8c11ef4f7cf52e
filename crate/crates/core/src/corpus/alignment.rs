//! Word-level alignments: `utterance_id start_frame end_frame word` per line,
//! frame indices 0-based and end-inclusive.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use super::Lexicon;
use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

/// One aligned word `(start, end, word)`, frames `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignedWord {
    pub start: usize,
    pub end: usize,
    pub word: String,
}

impl AlignedWord {
    pub fn new(start: usize, end: usize, word: impl Into<String>) -> Self {
        Self {
            start,
            end,
            word: word.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for AlignedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.start, self.end, self.word)
    }
}

/// Sorted, non-overlapping, in-range word segments of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordAlignment {
    utterance_id: String,
    entries: Vec<AlignedWord>,
}

impl WordAlignment {
    /// Sorts `entries` by start frame and checks them against the utterance
    /// length and the lexicon.
    pub fn new(
        utterance_id: impl Into<String>,
        mut entries: Vec<AlignedWord>,
        frames: usize,
        lexicon: &Lexicon,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        let fail = |message: String| Error::Alignment {
            utterance: utterance_id.clone(),
            message,
        };
        entries.sort_by_key(|e| (e.start, e.end));
        for e in &entries {
            if e.start > e.end {
                return Err(fail(format!("segment {e} starts after it ends")));
            }
            if e.end >= frames {
                return Err(fail(format!("segment {e} exceeds {frames} frames")));
            }
            if !lexicon.contains(&e.word) {
                return Err(Error::UnknownWord(e.word.clone()));
            }
        }
        for pair in entries.windows(2) {
            if pair[0].end >= pair[1].start {
                return Err(fail(format!("segments {} and {} overlap", pair[0], pair[1])));
            }
        }
        Ok(Self {
            utterance_id,
            entries,
        })
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn entries(&self) -> &[AlignedWord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }

    /// Length in frames of the shortest aligned word.
    pub fn shortest_word(&self) -> Option<usize> {
        self.entries.iter().map(AlignedWord::len).min()
    }
}

/// A syntactically valid alignment line, not yet checked against a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentRecord {
    pub line: usize,
    pub utterance_id: String,
    pub segment: AlignedWord,
}

pub fn parse_alignment(text: &str, path: &Path) -> Result<Vec<AlignmentRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let frame = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, lineno, format!("invalid {what} {s:?}")))
        };
        out.push(AlignmentRecord {
            line: lineno,
            utterance_id: fields[0].to_owned(),
            segment: AlignedWord::new(frame(fields[1], "start frame")?, frame(fields[2], "end frame")?, fields[3]),
        });
    }
    Ok(out)
}

/// Groups records per utterance and validates each group.
pub fn alignments_from_records(
    records: Vec<AlignmentRecord>,
    frame_counts: &HashMap<String, usize>,
    lexicon: &Lexicon,
) -> Result<Vec<WordAlignment>> {
    let mut grouped: BTreeMap<String, Vec<AlignedWord>> = BTreeMap::new();
    for r in records {
        if !frame_counts.contains_key(&r.utterance_id) {
            return Err(Error::UnknownUtterance(r.utterance_id));
        }
        grouped.entry(r.utterance_id).or_default().push(r.segment);
    }
    grouped
        .into_iter()
        .map(|(utt, entries)| {
            let frames = frame_counts[&utt];
            WordAlignment::new(utt, entries, frames, lexicon)
        })
        .collect()
}

/// Loads an alignment file against known utterance lengths and a lexicon.
pub fn load_alignment(
    path: impl AsRef<Path>,
    frame_counts: &HashMap<String, usize>,
    lexicon: &Lexicon,
) -> Result<Vec<WordAlignment>> {
    let path = path.as_ref();
    let records = parse_alignment(&read_text(path)?, path)?;
    alignments_from_records(records, frame_counts, lexicon)
}

pub fn alignments_to_text<'a>(alignments: impl IntoIterator<Item = &'a WordAlignment>) -> String {
    let mut out = String::new();
    for a in alignments {
        for e in a.entries() {
            out.push_str(&format!("{} {} {} {}\n", a.utterance_id(), e.start, e.end, e.word));
        }
    }
    out
}

pub fn write_alignment<'a>(
    alignments: impl IntoIterator<Item = &'a WordAlignment>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(path, alignments_to_text(alignments).as_bytes())
}
