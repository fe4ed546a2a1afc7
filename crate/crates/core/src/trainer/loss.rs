//! Severity-weighted absolute error.

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub base: f64,
    pub cliff: f64,
}

/// `base = mean |ŷ - y|`, `cliff = mean s·|ŷ - y|`, `total = base + λ·cliff`.
/// Empty input gives all zeros.
pub fn cliff_loss(preds: &[f64], targets: &[f64], scores: &[f64], lambda: f64) -> Result<LossParts, TrainError> {
    if preds.len() != targets.len() || preds.len() != scores.len() {
        return Err(TrainError::Dimension(format!(
            "{} predictions, {} targets, {} scores",
            preds.len(),
            targets.len(),
            scores.len()
        )));
    }
    let n = preds.len();
    if n == 0 {
        return Ok(LossParts {
            total: 0.0,
            base: 0.0,
            cliff: 0.0,
        });
    }
    let mut base = 0.0;
    let mut cliff = 0.0;
    for k in 0..n {
        let e = (preds[k] - targets[k]).abs();
        base += e;
        cliff += scores[k] * e;
    }
    let base = base / n as f64;
    let cliff = cliff / n as f64;
    Ok(LossParts {
        total: base + lambda * cliff,
        base,
        cliff,
    })
}

/// Per-sample factors `1 + λ·s_i`; averaging `w·|e|` equals the total loss.
pub fn sample_weights(scores: &[f64], lambda: f64) -> Vec<f64> {
    scores.iter().map(|s| 1.0 + lambda * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed() {
        // errors 1, 0.5, 2; scores 0, 2, 1
        let p = cliff_loss(&[1.0, 2.5, -1.0], &[0.0, 3.0, 1.0], &[0.0, 2.0, 1.0], 0.5).unwrap();
        assert!((p.base - 3.5 / 3.0).abs() < 1e-15);
        assert!((p.cliff - 3.0 / 3.0).abs() < 1e-15);
        assert!((p.total - (3.5 / 3.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn vanishing_cliff_term() {
        let p = cliff_loss(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], 3.0).unwrap();
        assert_eq!(p.total, p.base);
        let q = cliff_loss(&[1.0, 2.0], &[0.0, 0.0], &[1.0, 5.0], 0.0).unwrap();
        assert_eq!(q.total, q.base);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(cliff_loss(&[1.0], &[], &[1.0], 1.0), Err(TrainError::Dimension(_))));
    }

    proptest! {
        #[test]
        fn decomposition_and_weight_form(
            rows in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.0f64..5.0), 1..50),
            lambda in 0.0f64..2.0,
        ) {
            let preds: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let targets: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let scores: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let p = cliff_loss(&preds, &targets, &scores, lambda).unwrap();
            prop_assert!((p.total - (p.base + lambda * p.cliff)).abs() <= 1e-12 * p.total.abs().max(1e-300));
            let w = sample_weights(&scores, lambda);
            let weighted: f64 = rows.iter().zip(&w).map(|(r, w)| w * (r.0 - r.1).abs()).sum::<f64>() / rows.len() as f64;
            prop_assert!((weighted - p.total).abs() <= 1e-12 * p.total.abs().max(1.0));
        }
    }
}
