use super::trials::TrialSet;

pub const DEFAULT_BETA: f64 = 12.49;

/// Hard-decision operating point: a trial is accepted when its score is
/// strictly above `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwvPoint {
    pub theta: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub twv: f64,
}

/// Per-query counts used by the sweep.
struct QueryCounts {
    positives: usize,
    negatives: usize,
}

/// Mean over queries with a nonzero denominator of `count / denominator`.
fn query_mean(counts: &[usize], totals: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (&c, &t) in counts.iter().zip(totals) {
        if t > 0 {
            sum += c as f64 / t as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// TWV at `-inf`, every distinct score, and `+inf`, in increasing `theta`.
/// Miss and false-alarm rates are averaged per query; queries without
/// relevant (irrelevant) trials are left out of the miss (false-alarm) mean.
pub fn twv_curve(trials: &TrialSet, beta: f64) -> Vec<TwvPoint> {
    let groups = trials.by_query();
    let mut query_of = vec![0; trials.len()];
    let counts: Vec<QueryCounts> = groups
        .iter()
        .enumerate()
        .map(|(q, idx)| {
            for &i in idx {
                query_of[i] = q;
            }
            let positives = idx.iter().filter(|&&i| trials.trials()[i].relevant).count();
            QueryCounts {
                positives,
                negatives: idx.len() - positives,
            }
        })
        .collect();
    let skipped = counts.iter().filter(|c| c.positives == 0).count();
    if skipped > 0 {
        log::info!("{skipped} queries have no relevant trials and are left out of the miss rate");
    }
    let pos_totals: Vec<usize> = counts.iter().map(|c| c.positives).collect();
    let neg_totals: Vec<usize> = counts.iter().map(|c| c.negatives).collect();

    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials.trials()[a].score.total_cmp(&trials.trials()[b].score));

    // everything accepted at -inf
    let mut missed = vec![0usize; counts.len()];
    let mut false_alarms = neg_totals.clone();
    let point = |theta: f64, missed: &[usize], fa: &[usize]| {
        let p_miss = query_mean(missed, &pos_totals);
        let p_fa = query_mean(fa, &neg_totals);
        TwvPoint {
            theta,
            p_miss,
            p_fa,
            twv: 1.0 - (p_miss + beta * p_fa),
        }
    };
    let mut curve = vec![point(f64::NEG_INFINITY, &missed, &false_alarms)];
    let mut k = 0;
    while k < order.len() {
        let theta = trials.trials()[order[k]].score;
        while k < order.len() && trials.trials()[order[k]].score == theta {
            let t = &trials.trials()[order[k]];
            let q = query_of[order[k]];
            if t.relevant {
                missed[q] += 1;
            } else {
                false_alarms[q] -= 1;
            }
            k += 1;
        }
        curve.push(point(theta, &missed, &false_alarms));
    }
    curve.push(point(f64::INFINITY, &missed, &false_alarms));
    curve
}

pub fn max_twv(trials: &TrialSet, beta: f64) -> f64 {
    twv_curve(trials, beta)
        .into_iter()
        .map(|p| p.twv)
        .fold(f64::NEG_INFINITY, f64::max)
}
