use rand::Rng;

use crate::numcore::{Array, Scalar};

/// Cross-entropy against `q_k = eps / C + (1 - eps) [k = label]`.
///
/// Returns the loss and its gradient with respect to the logits.
pub fn smoothed_cross_entropy<T: Scalar>(logits: &[T], label: usize, eps: f64) -> (f64, Vec<f64>) {
    let c = logits.len() as f64;
    let z: Vec<f64> = logits.iter().map(|x| x.as_f64()).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.len());
    for (k, &v) in z.iter().enumerate() {
        let q = eps / c + if k == label { 1.0 - eps } else { 0.0 };
        let log_p = v - lse;
        loss -= q * log_p;
        grad.push(log_p.exp() - q);
    }
    (loss, grad)
}

/// Stochastic depth on a residual-branch value: in training, keep with
/// probability `1 - rate` and rescale by `1 / (1 - rate)`, otherwise zero.
/// Identity outside training or at rate 0.
pub fn apply_drop_path<T: Scalar, R: Rng>(value: &Array<T>, rate: f64, training: bool, rng: &mut R) -> Array<T> {
    if !training || rate <= 0.0 {
        return value.clone();
    }
    let keep = 1.0 - rate;
    if rng.random::<f64>() < keep {
        value.map(|x| x * T::of(1.0 / keep))
    } else {
        Array::zeros(value.rows(), value.cols())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let (loss, _) = smoothed_cross_entropy(&[50.0f64, 0.0, 0.0], 0, 0.0);
        assert!(loss < 1e-20);
    }

    #[test]
    fn uniform_logits_give_log_c() {
        for eps in [0.0, 0.1, 0.5] {
            let (loss, _) = smoothed_cross_entropy(&[0.3f64; 6], 2, eps);
            assert!((loss - 6f64.ln()).abs() < 1e-12);
            assert!((loss - 1.7918).abs() < 1e-4);
        }
    }

    #[test]
    fn smoothed_value_matches_direct_formula() {
        // q = [0.1/6 + 0.9, 0.1/6, ...]; p = softmax([2,0,0,0,0,0])
        let z = 2f64.exp() + 5.0;
        let (p0, pk) = (2f64.exp() / z, 1.0 / z);
        let q0 = 0.1 / 6.0 + 0.9;
        let qk = 0.1 / 6.0;
        let want = -(q0 * p0.ln() + 5.0 * qk * pk.ln());
        let (loss, grad) = smoothed_cross_entropy(&[2.0f64, 0.0, 0.0, 0.0, 0.0, 0.0], 0, 0.1);
        assert!((loss - want).abs() < 1e-14, "{loss} vs {want}");
        assert!((want - 0.683_480_176_9).abs() < 1e-9, "{want}");
        assert!((grad[0] - (p0 - q0)).abs() < 1e-15);
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = [0.4f64, -1.3, 2.2, 0.0];
        let (_, grad) = smoothed_cross_entropy(&logits, 1, 0.1);
        for k in 0..4 {
            let h = 1e-6;
            let mut a = logits;
            let mut b = logits;
            a[k] += h;
            b[k] -= h;
            let num = (smoothed_cross_entropy(&a, 1, 0.1).0 - smoothed_cross_entropy(&b, 1, 0.1).0) / (2.0 * h);
            assert!((num - grad[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn drop_path_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = Array::<f64>::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(apply_drop_path(&v, 0.1, false, &mut rng), v);
        assert_eq!(apply_drop_path(&v, 0.0, true, &mut rng), v);
    }

    #[test]
    fn drop_path_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = Array::<f64>::scalar(1.0);
        let n = 100_000;
        let outs: Vec<f64> = (0..n).map(|_| apply_drop_path(&v, 0.1, true, &mut rng).data()[0]).collect();
        let kept = outs.iter().filter(|&&x| x != 0.0).count() as f64 / n as f64;
        let mean = outs.iter().sum::<f64>() / n as f64;
        assert!((kept - 0.9).abs() < 0.01, "{kept}");
        assert!((mean - 1.0).abs() < 0.012, "{mean}");
    }
}
