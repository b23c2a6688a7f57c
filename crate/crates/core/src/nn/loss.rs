/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Returns `(loss, probs, dloss/dlogits)` for `-log softmax(logits)[target]`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let log_probs = log_softmax(logits);
    let probs = softmax(logits);
    let loss = -log_probs[target];
    let mut grad = probs.clone();
    grad[target] -= 1.0;
    (loss, probs, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_ln_nine() {
        let (loss, probs, _) = softmax_cross_entropy(&[0.3; 9], 4);
        assert!((loss - 9f64.ln()).abs() < 1e-12);
        assert!(probs.iter().all(|p| (p - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let (loss, probs, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0);
        assert!(loss.abs() < 1e-12 && loss.is_finite());
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn ce_gradient_sums_to_zero(logits in prop::collection::vec(-20.0f64..20.0, 2..12), t in 0usize..12) {
            let target = t % logits.len();
            let (_, _, g) = softmax_cross_entropy(&logits, target);
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
