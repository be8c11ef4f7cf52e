use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

/// Frame count and language of one training utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem<'a> {
    pub frames: usize,
    pub language: &'a str,
}

/// Shuffled single-language batches of item indices, each holding at most
/// `frame_budget` frames. An item longer than the budget becomes a batch of
/// its own.
pub fn make_batches<R: Rng + ?Sized>(items: &[BatchItem<'_>], frame_budget: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut by_language: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_language.entry(it.language).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (language, mut idx) in by_language {
        idx.shuffle(rng);
        let mut current: Vec<usize> = Vec::new();
        let mut frames = 0;
        for i in idx {
            let f = items[i].frames;
            if f > frame_budget {
                log::warn!(
                    "utterance of {f} frames exceeds the batch budget of {frame_budget} ({language}); batched alone"
                );
                batches.push(vec![i]);
                continue;
            }
            if frames + f > frame_budget && !current.is_empty() {
                batches.push(std::mem::take(&mut current));
                frames = 0;
            }
            current.push(i);
            frames += f;
        }
        if !current.is_empty() {
            batches.push(current);
        }
    }
    batches.shuffle(rng);
    batches
}
