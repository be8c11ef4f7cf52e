//! Span-level alignments obtained by removing randomly chosen word
//! boundaries.

use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::corpus::WordAlignment;
use crate::error::{Error, Result};

/// Frames `start..=end` covering a contiguous run of aligned words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanEntry {
    pub start: usize,
    pub end: usize,
    pub words: Vec<String>,
}

impl fmt::Display for SpanEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.start, self.end, self.words.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanAlignment {
    utterance_id: String,
    entries: Vec<SpanEntry>,
}

impl SpanAlignment {
    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn entries(&self) -> &[SpanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `(end of word i, start of word i+1)` for consecutive aligned words.
pub fn boundaries(a: &WordAlignment) -> Vec<(usize, usize)> {
    a.entries().windows(2).map(|w| (w[0].end, w[1].start)).collect()
}

/// Number of boundaries to remove: uniform over
/// `ceil((L-1)/2) ..= L-1`; zero for a single word.
pub fn sample_removal_count<R: Rng + ?Sized>(words: usize, rng: &mut R) -> usize {
    if words <= 1 {
        return 0;
    }
    let hi = words - 1;
    let lo = hi.div_ceil(2);
    rng.gen_range(lo..=hi)
}

/// Fuses the words on both sides of every boundary index in `removed`.
pub fn merge_at(a: &WordAlignment, removed: &[usize]) -> Result<SpanAlignment> {
    let n = a.len();
    let mut cut = vec![true; n.saturating_sub(1)];
    for &b in removed {
        match cut.get_mut(b) {
            Some(slot) => *slot = false,
            None => {
                return Err(Error::Alignment {
                    utterance: a.utterance_id().to_owned(),
                    message: format!("boundary {b} out of range for {n} words"),
                })
            }
        }
    }
    let mut entries: Vec<SpanEntry> = Vec::with_capacity(n);
    for (i, w) in a.entries().iter().enumerate() {
        match entries.last_mut() {
            Some(last) if !cut[i - 1] => {
                last.end = w.end;
                last.words.push(w.word.clone());
            }
            _ => entries.push(SpanEntry {
                start: w.start,
                end: w.end,
                words: vec![w.word.clone()],
            }),
        }
    }
    Ok(SpanAlignment {
        utterance_id: a.utterance_id().to_owned(),
        entries,
    })
}

/// Removes `r` distinct boundaries chosen uniformly at random, with `r` drawn
/// by [`sample_removal_count`].
pub fn merge_spans<R: Rng + ?Sized>(a: &WordAlignment, rng: &mut R) -> SpanAlignment {
    let r = sample_removal_count(a.len(), rng);
    let removed = if r == 0 {
        Vec::new()
    } else {
        index::sample(rng, a.len() - 1, r).into_vec()
    };
    merge_at(a, &removed).expect("sampled boundaries are in range")
}

/// Canonical identity of a word sequence. Word labels never contain
/// whitespace, so joining with a space is injective.
pub fn span_label_key<S: AsRef<str>>(words: &[S]) -> String {
    words.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}
