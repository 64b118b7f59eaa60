//! Bonferroni and Holm baselines.

use crate::engine::{finish, AdjustmentResult, Method};
use crate::error::{Error, Result};

pub fn bonferroni_threshold(m: usize, alpha: f64) -> f64 {
    alpha / m.max(1) as f64
}

fn check(raw: &[f64], alpha: f64) -> Result<()> {
    if raw.is_empty() {
        return Err(Error::invalid("no p-values"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    if raw.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("p-values must lie in [0, 1]"));
    }
    Ok(())
}

/// Single-step Bonferroni: reject `p_j <= alpha / m`; adjusted `min(1, m p_j)`.
pub fn bonferroni(raw: &[f64], alpha: f64) -> Result<AdjustmentResult> {
    check(raw, alpha)?;
    let m = raw.len() as f64;
    let threshold = bonferroni_threshold(raw.len(), alpha);
    let adjusted: Vec<f64> = raw.iter().map(|&p| (m * p).min(1.0)).collect();
    let mut result = finish(Method::Bonferroni, alpha, threshold, raw.to_vec(), adjusted);
    // The rejection rule is the threshold itself; `m p <= alpha` can disagree
    // with `p <= alpha / m` in the last bit.
    result.rejections = (0..raw.len()).filter(|&j| raw[j] <= threshold).collect();
    Ok(result)
}

/// Holm's step-down: with `p_(1) <= ... <= p_(m)`, reject while
/// `p_(k) <= alpha / (m - k + 1)`.
pub fn holm(raw: &[f64], alpha: f64) -> Result<AdjustmentResult> {
    check(raw, alpha)?;
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (k, &j) in order.iter().enumerate() {
        running = running.max(((m - k) as f64 * raw[j]).min(1.0));
        adjusted[j] = running;
    }
    let mut rejections: Vec<usize> = order
        .iter()
        .enumerate()
        .take_while(|&(k, &j)| raw[j] <= alpha / (m - k) as f64)
        .map(|(_, &j)| j)
        .collect();
    rejections.sort_unstable();
    let mut result = finish(Method::Holm, alpha, bonferroni_threshold(m, alpha), raw.to_vec(), adjusted);
    result.rejections = rejections;
    Ok(result)
}

/// Rejection set of Holm's procedure, ascending.
pub fn holm_reject(raw: &[f64], alpha: f64) -> Result<Vec<usize>> {
    Ok(holm(raw, alpha)?.rejections)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hypothesis_threshold_is_alpha() {
        assert_eq!(bonferroni_threshold(1, 0.05), 0.05);
        assert_eq!(bonferroni_threshold(4, 0.2), 0.05);
    }

    #[test]
    fn holm_example() {
        // 0.02 <= 0.05 / 2, so the second step also rejects.
        let raw = [0.001, 0.02, 0.9];
        assert_eq!(holm_reject(&raw, 0.05).unwrap(), vec![0, 1]);
        let r = holm(&raw, 0.05).unwrap();
        for (a, b) in r.adjusted_pvalues.iter().zip([0.003, 0.04, 0.9]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(holm_reject(&[0.001, 0.03, 0.9], 0.05).unwrap(), vec![0]);
        assert_eq!(bonferroni(&raw, 0.05).unwrap().rejections, vec![0]);
    }

    #[test]
    fn holm_stops_at_first_failure() {
        // 0.03 > 0.05/3 stops the procedure even though 0.04 <= 0.05/1.
        let raw = [0.03, 0.04, 0.04];
        assert!(holm_reject(&raw, 0.05).unwrap().is_empty());
        assert_eq!(holm_reject(&[0.01, 0.02, 0.04], 0.05).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn bonferroni_rule() {
        let r = bonferroni(&[0.01, 0.02, 0.5], 0.06).unwrap();
        assert_eq!(r.rejections, vec![0, 1]);
        assert_eq!(r.threshold, 0.02);
    }

    #[test]
    fn invalid_input() {
        assert!(holm(&[], 0.05).is_err());
        assert!(bonferroni(&[0.5], 1.5).is_err());
        assert!(bonferroni(&[1.5], 0.05).is_err());
    }
}
