//! Frequency and time masking of feature matrices for training-time
//! augmentation.
//!
//! Time-mask widths are capped at half the shortest aligned word, so no word
//! segment is ever fully masked by a single time mask.

use rand::Rng;

use crate::corpus::{FeatureMatrix, WordAlignment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentPolicy {
    pub num_freq_masks: usize,
    /// Widths are drawn from `0..=max_freq_width` channels.
    pub max_freq_width: usize,
    pub num_time_masks: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            num_freq_masks: 1,
            max_freq_width: 9,
            num_time_masks: 1,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.num_freq_masks > 0 && self.max_freq_width >= dim {
            return Err(Error::InvalidPolicy(format!(
                "max frequency width {} must be below the feature dimension {dim}",
                self.max_freq_width
            )));
        }
        Ok(())
    }
}

/// A contiguous band `start..start + width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub start: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskDraw {
    pub channels: Vec<Band>,
    pub frames: Vec<Band>,
}

/// Draws mask bands for a `frames x dim` matrix whose shortest aligned word
/// spans `t_min` frames.
pub fn sample_masks<R: Rng + ?Sized>(
    frames: usize,
    dim: usize,
    t_min: usize,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<MaskDraw> {
    policy.validate(dim)?;
    let mut draw = MaskDraw::default();
    for _ in 0..policy.num_freq_masks {
        let width = rng.gen_range(0..=policy.max_freq_width);
        let start = rng.gen_range(0..=dim - width);
        draw.channels.push(Band { start, width });
    }
    let max_width = (t_min / 2).min(frames);
    for _ in 0..policy.num_time_masks {
        let width = rng.gen_range(0..=max_width);
        let start = rng.gen_range(0..=frames - width);
        draw.frames.push(Band { start, width });
    }
    Ok(draw)
}

/// Zeroes the drawn bands.
pub fn apply_masks(x: &FeatureMatrix, draw: &MaskDraw) -> FeatureMatrix {
    let mut out = x.clone();
    let dim = x.dim();
    let data = out.data_mut();
    for band in &draw.channels {
        for row in data.chunks_exact_mut(dim) {
            row[band.start..band.start + band.width].fill(0.0);
        }
    }
    for band in &draw.frames {
        data[band.start * dim..(band.start + band.width) * dim].fill(0.0);
    }
    out
}

pub fn spec_augment<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    alignment: &WordAlignment,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    let t_min = alignment.shortest_word().ok_or(Error::EmptyAlignment)?;
    let draw = sample_masks(x.frames(), x.dim(), t_min, policy, rng)?;
    Ok(apply_masks(x, &draw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AlignedWord, Lexicon};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::path::Path;

    fn ramp(frames: usize, dim: usize) -> FeatureMatrix {
        let data = (0..frames * dim).map(|i| i as f32 + 1.0).collect();
        FeatureMatrix::new("u", frames, dim, data).unwrap()
    }

    fn alignment(lengths: &[usize]) -> WordAlignment {
        let lex = Lexicon::parse("w\tp\n", Path::new("lex")).unwrap();
        let mut start = 0;
        let mut entries = Vec::new();
        for &len in lengths {
            entries.push(AlignedWord::new(start, start + len - 1, "w"));
            start += len;
        }
        WordAlignment::new("u", entries, start, &lex).unwrap()
    }

    #[test]
    fn zero_width_masks_are_identity() {
        let x = ramp(10, 8);
        let draw = MaskDraw {
            channels: vec![Band { start: 3, width: 0 }],
            frames: vec![Band { start: 5, width: 0 }],
        };
        assert_eq!(apply_masks(&x, &draw), x);
    }

    #[test]
    fn channel_band_zeroed() {
        let x = ramp(10, 8);
        let draw = MaskDraw {
            channels: vec![Band { start: 2, width: 3 }],
            frames: vec![Band { start: 0, width: 0 }],
        };
        let y = apply_masks(&x, &draw);
        for t in 0..10 {
            for c in 0..8 {
                let expected = if (2..5).contains(&c) { 0.0 } else { x.row(t)[c] };
                assert_eq!(y.row(t)[c], expected);
            }
        }
    }

    #[test]
    fn time_width_uniform_over_half_shortest_word() {
        // word lengths {4, 6}: t_min = 4, widths in {0, 1, 2}
        let a = alignment(&[4, 6]);
        let policy = AugmentPolicy {
            num_freq_masks: 0,
            max_freq_width: 0,
            num_time_masks: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let d = sample_masks(10, 4, a.shortest_word().unwrap(), &policy, &mut rng).unwrap();
            counts[d.frames[0].width] += 1;
        }
        let expected = draws as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square, 2 dof, p = 0.001
        assert!(chi2 < 13.82, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn empty_alignment_and_bad_policy_rejected() {
        let lex = Lexicon::parse("w\tp\n", Path::new("lex")).unwrap();
        let empty = WordAlignment::new("u", vec![], 10, &lex).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = ramp(10, 12);
        assert!(matches!(
            spec_augment(&x, &empty, &AugmentPolicy::default(), &mut rng),
            Err(Error::EmptyAlignment)
        ));
        let narrow = ramp(10, 9);
        assert!(matches!(
            spec_augment(&narrow, &alignment(&[10]), &AugmentPolicy::default(), &mut rng),
            Err(Error::InvalidPolicy(_))
        ));
    }

    #[test]
    fn seeded_draws_repeat() {
        let x = ramp(30, 12);
        let a = alignment(&[10, 8, 12]);
        let p = AugmentPolicy::default();
        let y1 = spec_augment(&x, &a, &p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let y2 = spec_augment(&x, &a, &p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(y1, y2);
    }
}
