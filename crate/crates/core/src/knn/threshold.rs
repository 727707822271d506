use crate::error::{Error, Result};

/// Precision and recall of `score >= threshold`: `(tp, predicted_positive, positives)`.
pub fn threshold_metrics(scores: &[(f64, bool)], threshold: f64) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut pp = 0;
    let mut pos = 0;
    for &(s, y) in scores {
        pos += usize::from(y);
        if s >= threshold {
            pp += 1;
            tp += usize::from(y);
        }
    }
    (tp, pp, pos)
}

/// Pick the threshold with the highest precision whose recall is at least
/// `min_recall`. Candidates are the distinct scores plus 0; precision ties go
/// to the higher threshold.
///
/// Threshold 0 always reaches recall 1, so a positive-bearing input always
/// has an answer.
pub fn select_threshold(scores: &[(f64, bool)], min_recall: f64) -> Result<f64> {
    if !(min_recall > 0.0 && min_recall <= 1.0) {
        return Err(Error::InvalidConfig(format!("min_recall {min_recall} outside (0, 1]")));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("threshold scores"));
    }
    if scores.iter().any(|(s, _)| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidConfig("scores must be finite and non-negative".into()));
    }
    let positives = scores.iter().filter(|(_, y)| *y).count();
    if positives == 0 {
        return Err(Error::Degenerate("no positive examples to select a threshold on".into()));
    }

    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    // (threshold, tp, predicted positives)
    let mut best: Option<(f64, usize, usize)> = None;
    let mut consider = |t: f64, tp: usize, pp: usize| {
        let recall = tp as f64 / positives as f64;
        if recall < min_recall {
            return;
        }
        // Strictly better precision only: descending sweep keeps the higher threshold on ties.
        let better = match best {
            None => true,
            Some((_, btp, bpp)) => (tp as u128) * (bpp as u128) > (btp as u128) * (pp as u128),
        };
        if better {
            best = Some((t, tp, pp));
        }
    };

    let (mut tp, mut pp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            pp += 1;
            tp += usize::from(sorted[i].1);
            i += 1;
        }
        consider(t, tp, pp);
    }
    if sorted.last().is_some_and(|l| l.0 > 0.0) {
        consider(0.0, tp, pp);
    }
    Ok(best.expect("threshold 0 reaches full recall").0)
}
