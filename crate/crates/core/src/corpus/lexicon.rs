use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

/// Pronunciation lexicon: word label to phone sequence, plus the ordered
/// phone inventory (sorted unique phone labels).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
    phones: Vec<String>,
}

impl Lexicon {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        for (word, pron) in &entries {
            if pron.is_empty() {
                return Err(Error::Config(format!("empty pronunciation for {word:?}")));
            }
        }
        let phones: BTreeSet<&String> = entries.values().flatten().collect();
        let phones = phones.into_iter().cloned().collect();
        Ok(Self { entries, phones })
    }

    pub fn pronunciation(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (word, pron) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno, "expected `word<TAB>phones`"))?;
            let word = word.trim();
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(Error::parse(path, lineno, format!("invalid word label {word:?}")));
            }
            let phones: Vec<String> = pron.split_whitespace().map(str::to_owned).collect();
            if phones.is_empty() {
                return Err(Error::parse(path, lineno, format!("empty pronunciation for {word:?}")));
            }
            if entries.insert(word.to_owned(), phones).is_some() {
                return Err(Error::parse(path, lineno, format!("duplicate word {word:?}")));
            }
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, pron) in &self.entries {
            out.push_str(word);
            out.push('\t');
            out.push_str(&pron.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    Lexicon::parse(&read_text(path)?, path)
}

pub fn write_lexicon(lexicon: &Lexicon, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, lexicon.to_text().as_bytes())
}
