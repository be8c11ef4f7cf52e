use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qbe_core::augment::{apply_masks, sample_masks, spec_augment, AugmentPolicy, Band};
use qbe_core::corpus::{
    alignments_from_records, alignments_to_text, parse_alignment, validate_corpus, AlignedWord, AlignmentRecord,
    FeatureMatrix, GroundTruth, Lexicon, ScoreEntry, ScoreTable, Trial, Violation, WordAlignment,
};
use qbe_core::spans::merge_spans;

const WORDS: [&str; 4] = ["ba", "di", "gu", "ko"];

fn lexicon() -> Lexicon {
    let entries: BTreeMap<String, Vec<String>> = WORDS
        .iter()
        .map(|w| (w.to_string(), w.chars().map(|c| c.to_string()).collect()))
        .collect();
    Lexicon::new(entries).unwrap()
}

/// Word segments `(gap, length, word)` laid end to end after `gap` frames.
fn layout() -> impl Strategy<Value = (Vec<(usize, usize, usize)>, usize)> {
    (prop::collection::vec((0usize..4, 1usize..9, 0usize..WORDS.len()), 1..7), 0usize..4)
}

fn build(id: &str, words: &[(usize, usize, usize)], tail: usize) -> (Vec<AlignedWord>, usize) {
    let mut t = 0;
    let mut out = Vec::new();
    for &(gap, len, w) in words {
        t += gap;
        out.push(AlignedWord::new(t, t + len - 1, WORDS[w]));
        t += len;
    }
    let _ = id;
    (out, t + tail)
}

fn matrix(id: &str, frames: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let data = (0..frames * dim)
        .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 100.0 + 0.5)
        .collect();
    FeatureMatrix::new(id, frames, dim, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn feature_container_round_trip(frames in 1usize..40, dim in 1usize..10, seed in any::<u64>()) {
        let x = matrix("utt", frames, dim, seed);
        let back = FeatureMatrix::decode(&x.encode(), "utt", Path::new("x.fea")).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn alignment_round_trip_is_sorted_and_in_range(
        utts in prop::collection::vec(layout(), 1..5),
        shuffle_seed in any::<u64>(),
    ) {
        let lex = lexicon();
        let mut frames = HashMap::new();
        let mut alignments = Vec::new();
        for (i, (words, tail)) in utts.iter().enumerate() {
            let id = format!("u{i}");
            let (entries, t) = build(&id, words, *tail);
            frames.insert(id.clone(), t);
            alignments.push(WordAlignment::new(id, entries, t, &lex).unwrap());
        }
        // shuffle lines: loading must restore the sorted structure
        let mut lines: Vec<String> = alignments_to_text(&alignments).lines().map(str::to_owned).collect();
        use rand::seq::SliceRandom;
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let text = lines.join("\n");
        let loaded = alignments_from_records(parse_alignment(&text, Path::new("a.txt")).unwrap(), &frames, &lex).unwrap();
        prop_assert_eq!(&loaded, &alignments);
        for a in &loaded {
            let t = frames[a.utterance_id()];
            prop_assert!(a.entries().iter().all(|e| e.start <= e.end && e.end < t));
            prop_assert!(a.entries().windows(2).all(|p| p[0].end < p[1].start));
        }
    }

    #[test]
    fn lexicon_truth_and_scores_round_trip(
        trials in prop::collection::btree_map((0u8..4, 0u8..6), (any::<bool>(), prop::option::of(0u8..3), -40i32..40), 1..20),
    ) {
        let lex = lexicon();
        prop_assert_eq!(Lexicon::parse(&lex.to_text(), Path::new("l")).unwrap(), lex);

        let truth = GroundTruth::new(
            trials
                .iter()
                .map(|(&(q, u), &(rel, tag, _))| Trial {
                    query_id: format!("q{q}"),
                    utterance_id: format!("u{u}"),
                    relevant: rel,
                    tag: tag.map(|t| format!("t{t}")),
                })
                .collect(),
        )
        .unwrap();
        prop_assert_eq!(GroundTruth::parse(&truth.to_text(), Path::new("t")).unwrap(), truth);

        let scores = ScoreTable::new(
            trials
                .iter()
                .map(|(&(q, u), &(_, _, s))| ScoreEntry {
                    query_id: format!("q{q}"),
                    utterance_id: format!("u{u}"),
                    score: f64::from(s) / 8.0,
                })
                .collect(),
        )
        .unwrap();
        prop_assert_eq!(ScoreTable::parse(&scores.to_text(), Path::new("s")).unwrap(), scores);
    }

    #[test]
    fn validation_is_clean_exactly_without_faults(
        utts in prop::collection::vec(layout(), 1..4),
        fault in 0usize..6,
        target in any::<prop::sample::Index>(),
    ) {
        let lex = lexicon();
        let mut features = Vec::new();
        let mut records = Vec::new();
        for (i, (words, tail)) in utts.iter().enumerate() {
            let id = format!("u{i}");
            let (entries, t) = build(&id, words, *tail);
            features.push(matrix(&id, t, 2, i as u64));
            for e in entries {
                records.push(AlignmentRecord { line: records.len() + 1, utterance_id: id.clone(), segment: e });
            }
        }
        prop_assert!(validate_corpus(&features, &records, &lex).is_empty());

        let r = target.index(records.len());
        let line = records[r].line;
        let frames = features.iter().find(|f| f.utterance_id() == records[r].utterance_id).unwrap().frames();
        let expected = match fault {
            0 => {
                records[r].segment.word = "zz".into();
                Violation::UnknownWord { line, word: "zz".into() }
            }
            1 => {
                records[r].utterance_id = "nowhere".into();
                Violation::UnknownUtterance { line, utterance: "nowhere".into() }
            }
            2 => {
                records[r].segment.end = frames;
                Violation::OutOfRange { line, utterance: records[r].utterance_id.clone(), end: frames, frames }
            }
            3 => {
                let dup = records[r].clone();
                let new_line = records.len() + 1;
                records.push(AlignmentRecord { line: new_line, ..dup.clone() });
                Violation::Overlap { utterance: dup.utterance_id, first_line: line, second_line: new_line }
            }
            4 => {
                let id = features[0].utterance_id().to_owned();
                features.push(matrix(&id, 3, 2, 0));
                Violation::DuplicateUtterance(id)
            }
            _ => {
                features.push(matrix("extra", 3, 5, 0));
                Violation::FeatureDimension { utterance: "extra".into(), expected: 2, actual: 5 }
            }
        };
        let report = validate_corpus(&features, &records, &lex);
        prop_assert!(report.violations.contains(&expected), "{:?} not in {:?}", expected, report.violations);
    }

    #[test]
    fn augmentation_keeps_shape_and_part_of_every_word(
        (words, tail) in layout(),
        dim in 2usize..12,
        freq in 0usize..3,
        seed in any::<u64>(),
    ) {
        let lex = lexicon();
        let (entries, t) = build("u", &words, tail);
        let a = WordAlignment::new("u", entries, t, &lex).unwrap();
        let x = matrix("u", t, dim, seed);
        let policy = AugmentPolicy { num_freq_masks: freq, max_freq_width: dim - 1, num_time_masks: 1 };
        let draw = sample_masks(t, dim, a.shortest_word().unwrap(), &policy, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let y = spec_augment(&x, &a, &policy, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&y, &apply_masks(&x, &draw));
        prop_assert_eq!((y.frames(), y.dim()), (x.frames(), x.dim()));

        let in_band = |bands: &[Band], i: usize| bands.iter().any(|b| (b.start..b.start + b.width).contains(&i));
        for f in 0..t {
            for c in 0..dim {
                let masked = in_band(&draw.frames, f) || in_band(&draw.channels, c);
                let expected = if masked { 0.0 } else { x.row(f)[c] };
                prop_assert_eq!(y.row(f)[c], expected);
            }
        }
        for e in a.entries() {
            prop_assert!((e.start..=e.end).any(|f| !in_band(&draw.frames, f)), "word {} fully masked", e);
        }
        let again = spec_augment(&x, &a, &policy, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(again, y);
    }

    #[test]
    fn span_merging_preserves_coverage((words, tail) in layout(), seed in any::<u64>()) {
        let lex = lexicon();
        let (entries, t) = build("u", &words, tail);
        let a = WordAlignment::new("u", entries, t, &lex).unwrap();
        let spans = merge_spans(&a, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(spans.entries().first().unwrap().start, a.entries()[0].start);
        prop_assert_eq!(spans.entries().last().unwrap().end, a.entries().last().unwrap().end);
        let words: Vec<&str> = spans.entries().iter().flat_map(|s| s.words.iter().map(String::as_str)).collect();
        prop_assert_eq!(words, a.words().collect::<Vec<_>>());
        // every span starts at a word start and ends at a word end
        for s in spans.entries() {
            prop_assert!(a.entries().iter().any(|e| e.start == s.start));
            prop_assert!(a.entries().iter().any(|e| e.end == s.end));
        }
        if a.len() >= 2 {
            prop_assert!(spans.len() <= a.len() - (a.len() - 1).div_ceil(2));
        }
        prop_assert_eq!(merge_spans(&a, &mut ChaCha8Rng::seed_from_u64(seed)), spans);
    }
}
