use super::trials::TrialSet;

pub const SLOPE_RANGE: (f64, f64) = (0.0, 50.0);
pub const OFFSET_RANGE: (f64, f64) = (-25.0, 25.0);

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Zero-mean, unit-variance scores; all zeros when the scores are constant.
pub fn standardize(scores: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - mean) / sd).collect()
}

/// Calibration problem: standardized scores, labels and the prior entropy.
#[derive(Debug, Clone)]
pub struct Calibration {
    z: Vec<f64>,
    y: Vec<bool>,
    prior_entropy: f64,
}

impl Calibration {
    pub fn new(trials: &TrialSet) -> Self {
        let scores: Vec<f64> = trials.trials().iter().map(|t| t.score).collect();
        let y: Vec<bool> = trials.trials().iter().map(|t| t.relevant).collect();
        let pi = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        let prior_entropy = -(pi * pi.ln() + (1.0 - pi) * (1.0 - pi).ln());
        Self {
            z: standardize(&scores),
            y,
            prior_entropy,
        }
    }

    pub fn standardized(&self) -> &[f64] {
        &self.z
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    /// Cross entropy of `sigmoid(slope * z + offset)` against the labels,
    /// divided by the entropy of the empirical prior.
    pub fn cnxe(&self, slope: f64, offset: f64) -> f64 {
        let total: f64 = self
            .z
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| {
                let a = slope * z + offset;
                if y {
                    softplus(-a)
                } else {
                    softplus(a)
                }
            })
            .sum();
        total / self.z.len() as f64 / self.prior_entropy
    }
}

const GRID: usize = 21;
const ZOOM_STEPS: f64 = 3.0;

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
}

/// Minimum normalized cross entropy over the calibration slope and offset,
/// found by repeated grid refinement around the best grid point.
pub fn min_cnxe(trials: &TrialSet) -> f64 {
    let cal = Calibration::new(trials);
    let (mut a_lo, mut a_hi) = SLOPE_RANGE;
    let (mut b_lo, mut b_hi) = OFFSET_RANGE;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..60 {
        for a in linspace(a_lo, a_hi, GRID) {
            for b in linspace(b_lo, b_hi, GRID) {
                let v = cal.cnxe(a, b);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let da = (a_hi - a_lo) / (GRID - 1) as f64;
        let db = (b_hi - b_lo) / (GRID - 1) as f64;
        if da < 1e-9 && db < 1e-9 {
            break;
        }
        a_lo = (best.1 - ZOOM_STEPS * da).max(SLOPE_RANGE.0);
        a_hi = (best.1 + ZOOM_STEPS * da).min(SLOPE_RANGE.1);
        b_lo = (best.2 - ZOOM_STEPS * db).max(OFFSET_RANGE.0);
        b_hi = (best.2 + ZOOM_STEPS * db).min(OFFSET_RANGE.1);
    }
    best.0
}
