//! Corpus ingestion: features, alignments, lexicon, queries, ground truth and
//! score tables.
//!
//! A corpus directory is laid out as
//!
//! ```text
//! lexicon.txt
//! ground_truth.txt
//! train/  feats/<utt>.fea  align.txt  [utt2lang.txt]
//! dev/    feats/<utt>.fea  align.txt  [utt2lang.txt]
//! search/ feats/<utt>.fea  [align.txt]
//! queries/ feats/<query>.fea  queries.txt
//! ```

mod alignment;
mod features;
mod lexicon;
mod truth;
mod validate;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use alignment::{
    alignments_from_records, alignments_to_text, load_alignment, parse_alignment, write_alignment, AlignedWord,
    AlignmentRecord, WordAlignment,
};
pub use features::{load_features, write_features, FeatureMatrix, FEAT_MAGIC};
pub use lexicon::{load_lexicon, write_lexicon, Lexicon};
pub use truth::{
    load_ground_truth, read_scores, write_ground_truth, write_scores, GroundTruth, ScoreEntry, ScoreTable, Trial,
};
pub use validate::{validate_corpus, ValidationReport, Violation};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

pub const DEFAULT_LANGUAGE: &str = "default";

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub features: FeatureMatrix,
    pub language: String,
    pub alignment: Option<WordAlignment>,
}

impl Utterance {
    pub fn id(&self) -> &str {
        self.features.utterance_id()
    }
}

/// One split of a corpus (train, dev or search), sorted by utterance id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    utterances: Vec<Utterance>,
}

impl Split {
    pub fn new(mut utterances: Vec<Utterance>) -> Result<Self> {
        utterances.sort_by(|a, b| a.id().cmp(b.id()));
        for pair in utterances.windows(2) {
            if pair[0].id() == pair[1].id() {
                return Err(Error::Duplicate(format!("utterance {}", pair[0].id())));
            }
        }
        if let Some(first) = utterances.first() {
            let dim = first.features.dim();
            if let Some(u) = utterances.iter().find(|u| u.features.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: u.features.dim(),
                });
            }
        }
        Ok(Self { utterances })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances
            .binary_search_by(|u| u.id().cmp(id))
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.features.dim())
    }

    pub fn frame_counts(&self) -> HashMap<String, usize> {
        self.utterances
            .iter()
            .map(|u| (u.id().to_owned(), u.features.frames()))
            .collect()
    }

    /// Loads `dir/feats/*.fea`, and `dir/align.txt` / `dir/utt2lang.txt` when present.
    pub fn load(dir: impl AsRef<Path>, lexicon: &Lexicon) -> Result<Self> {
        let dir = dir.as_ref();
        let features = load_feature_dir(dir.join("feats"))?;
        let languages = load_languages(dir.join("utt2lang.txt"))?;
        let counts: HashMap<String, usize> = features
            .iter()
            .map(|f| (f.utterance_id().to_owned(), f.frames()))
            .collect();
        let ali_path = dir.join("align.txt");
        let mut alignments: HashMap<String, WordAlignment> = if ali_path.exists() {
            load_alignment(&ali_path, &counts, lexicon)?
                .into_iter()
                .map(|a| (a.utterance_id().to_owned(), a))
                .collect()
        } else {
            HashMap::new()
        };
        let utterances = features
            .into_iter()
            .map(|features| {
                let id = features.utterance_id().to_owned();
                Utterance {
                    language: languages.get(&id).cloned().unwrap_or_else(|| DEFAULT_LANGUAGE.to_owned()),
                    alignment: alignments.remove(&id),
                    features,
                }
            })
            .collect();
        Self::new(utterances)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let feats = dir.join("feats");
        self.utterances
            .par_iter()
            .try_for_each(|u| write_features(&u.features, feats.join(format!("{}.fea", u.id()))))?;
        let alignments: Vec<&WordAlignment> = self.utterances.iter().filter_map(|u| u.alignment.as_ref()).collect();
        if !alignments.is_empty() {
            write_alignment(alignments, dir.join("align.txt"))?;
        }
        let mut langs = String::new();
        for u in &self.utterances {
            langs.push_str(&format!("{}\t{}\n", u.id(), u.language));
        }
        write_atomic(dir.join("utt2lang.txt"), langs.as_bytes())
    }
}

/// Loads every `*.fea` file of a directory in parallel, sorted by file name.
pub fn load_feature_dir(dir: impl AsRef<Path>) -> Result<Vec<FeatureMatrix>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "fea"))
        .collect();
    paths.sort();
    paths.par_iter().map(load_features).collect()
}

fn load_languages(path: PathBuf) -> Result<HashMap<String, String>> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let text = read_text(&path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (utt, lang) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&path, i + 1, "expected `utterance<TAB>language`"))?;
        out.insert(utt.to_owned(), lang.trim().to_owned());
    }
    Ok(out)
}

/// A spoken query with its transcript (for reporting) and optional sub-task tag.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDef {
    pub features: FeatureMatrix,
    pub words: Vec<String>,
    pub tag: Option<String>,
}

impl QueryDef {
    pub fn id(&self) -> &str {
        self.features.utterance_id()
    }
}

/// Loads `dir/feats/*.fea` and `dir/queries.txt` (`query<TAB>words[<TAB>tag]`).
pub fn load_queries(dir: impl AsRef<Path>) -> Result<Vec<QueryDef>> {
    let dir = dir.as_ref();
    let features: HashMap<String, FeatureMatrix> = load_feature_dir(dir.join("feats"))?
        .into_iter()
        .map(|f| (f.utterance_id().to_owned(), f))
        .collect();
    let path = dir.join("queries.txt");
    let text = read_text(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(&path, lineno, "expected `query<TAB>words[<TAB>tag]`"));
        }
        let features = features
            .get(fields[0])
            .cloned()
            .ok_or_else(|| Error::parse(&path, lineno, format!("no features for query {}", fields[0])))?;
        out.push(QueryDef {
            features,
            words: fields[1].split_whitespace().map(str::to_owned).collect(),
            tag: fields.get(2).map(|t| t.trim().to_owned()).filter(|t| !t.is_empty()),
        });
    }
    Ok(out)
}

pub fn write_queries(queries: &[QueryDef], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut text = String::new();
    for q in queries {
        write_features(&q.features, dir.join("feats").join(format!("{}.fea", q.id())))?;
        text.push_str(&format!("{}\t{}", q.id(), q.words.join(" ")));
        if let Some(tag) = &q.tag {
            text.push('\t');
            text.push_str(tag);
        }
        text.push('\n');
    }
    write_atomic(dir.join("queries.txt"), text.as_bytes())
}

/// Standard file locations inside a corpus directory.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub root: PathBuf,
}

impl CorpusPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn lexicon(&self) -> PathBuf {
        self.root.join("lexicon.txt")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.txt")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn dev(&self) -> PathBuf {
        self.root.join("dev")
    }

    pub fn search(&self) -> PathBuf {
        self.root.join("search")
    }

    pub fn queries(&self) -> PathBuf {
        self.root.join("queries")
    }
}

/// Runs [`validate_corpus`] over a split directory without aborting on the
/// first alignment problem.
pub fn validate_split_dir(dir: impl AsRef<Path>, lexicon: &Lexicon) -> Result<ValidationReport> {
    let dir = dir.as_ref();
    let features = load_feature_dir(dir.join("feats"))?;
    let ali = dir.join("align.txt");
    let records = if ali.exists() {
        parse_alignment(&read_text(&ali)?, &ali)?
    } else {
        Vec::new()
    };
    Ok(validate_corpus(&features, &records, lexicon))
}
