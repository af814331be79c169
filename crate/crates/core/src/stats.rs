//! Exact rank statistics.

/// Relative resolution below which predicted values count as tied. Probe
/// outputs are computed from `f32` activations, so differences smaller
/// than this carry no ordering information.
pub const RANK_RESOLUTION: f64 = 1e-6;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    average_ranks_within(x, 0.0)
}

/// As [`average_ranks`], tying every value within `rel_tol · max|x|` of the
/// smallest value of its group.
pub fn average_ranks_within(x: &[f64], rel_tol: f64) -> Vec<f64> {
    let tol = rel_tol * x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] - x[order[start]] <= tol {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson needs equal lengths");
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    let denom = (sxx * syy).sqrt();
    if denom <= 1e-300 || sxx <= 1e-24 * (mx * mx).max(1.0) || syy <= 1e-24 * (my * my).max(1.0) {
        return None;
    }
    Some((sxy / denom).clamp(-1.0, 1.0))
}

/// Spearman's ρ with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Spearman's ρ of predictions against exact gold values, with predictions
/// tied at [`RANK_RESOLUTION`].
pub fn spearman_resolved(pred: &[f64], gold: &[f64]) -> Option<f64> {
    spearman_within(pred, gold, RANK_RESOLUTION)
}

/// Spearman's ρ with predictions tied within `resolution · max|pred|`; a
/// resolution of 0 ranks them exactly.
pub fn spearman_within(pred: &[f64], gold: &[f64], resolution: f64) -> Option<f64> {
    pearson(&average_ranks_within(pred, resolution), &average_ranks(gold))
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard error of the mean (sample standard deviation over √n).
pub fn std_error(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (var / x.len() as f64).sqrt()
}

/// Population z-scores; `None` when the values are constant.
pub fn z_scores(x: &[f64]) -> Option<Vec<f64>> {
    let m = mean(x);
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    (sd > 1e-12 * m.abs().max(1.0)).then(|| x.iter().map(|v| (v - m) / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn rounding_jitter_is_tied() {
        let pred = [1.0 + 1e-9, 2.0, 1.0 - 1e-9, 1.0];
        let gold = [1.0, 2.0, 1.0, 1.0];
        assert_eq!(spearman_resolved(&pred, &gold), Some(1.0));
        assert!(spearman(&pred, &gold).unwrap() < 1.0);
    }

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 400.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0; 4]), None);
    }

    #[test]
    fn z_scores_are_idempotent() {
        let z = z_scores(&[3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
        let zz = z_scores(&z).unwrap();
        for (a, b) in z.iter().zip(&zz) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
