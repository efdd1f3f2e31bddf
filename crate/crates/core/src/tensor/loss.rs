use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Loss value, output-layer probabilities, and the gradient of the loss with
/// respect to the logits.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    pub grad: Tensor<T>,
}

fn check_one_hot<T: Element>(logits: &Tensor<T>, labels: &Tensor<T>) -> Result<[usize; 2]> {
    let dims = logits.dims2("logits")?;
    if labels.shape() != logits.shape() {
        return Err(Error::Shape(format!(
            "labels {:?} do not match logits {:?}",
            labels.shape(),
            logits.shape()
        )));
    }
    for (row, values) in labels.data().chunks(dims[1]).enumerate() {
        let ones = values.iter().filter(|&&v| v == T::one()).count();
        let zeros = values.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || ones + zeros != values.len() {
            return Err(Error::Input(format!("label row {row} is not one-hot")));
        }
    }
    Ok(dims)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = logits.dims2("logits")?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(k) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total = exps.iter().fold(T::zero(), |a, &b| a + b);
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::new(logits.shape().to_vec(), out)
}

pub fn sigmoid<T: Element>(logits: &Tensor<T>) -> Tensor<T> {
    logits.map(sigmoid_scalar)
}

fn sigmoid_scalar<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Mean over the batch of `-ln p(true class)`; gradient `(probs - labels) / N`.
pub fn softmax_cross_entropy<T: Element>(logits: &Tensor<T>, labels: &Tensor<T>) -> Result<LossOutput<T>> {
    let [n, k] = check_one_hot(logits, labels)?;
    if k < 2 {
        return Err(Error::Config(format!(
            "softmax needs at least 2 classes, got {k}"
        )));
    }
    let probs = softmax(logits)?;
    let n_t = T::from_usize(n).unwrap();
    let mut loss = T::zero();
    // log-softmax directly from the logits keeps the loss finite when the
    // true-class probability underflows.
    for (row, lab) in logits.data().chunks(k).zip(labels.data().chunks(k)) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln() + max;
        let target = lab.iter().position(|&v| v == T::one()).expect("one-hot");
        loss = loss + (lse - row[target]);
    }
    let grad = probs
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| (p - y) / n_t)
        .collect();
    Ok(LossOutput {
        loss: loss / n_t,
        grad: Tensor::new(logits.shape().to_vec(), grad)?,
        probs,
    })
}

/// Independent sigmoid per output unit with binary cross-entropy averaged over
/// every unit of the batch. Only defined for the 2-unit binary head.
pub fn sigmoid_binary_loss<T: Element>(logits: &Tensor<T>, labels: &Tensor<T>) -> Result<LossOutput<T>> {
    let [_, k] = logits.dims2("logits")?;
    if k != 2 {
        return Err(Error::Config(format!(
            "sigmoid binary loss needs exactly 2 output units, got {k}"
        )));
    }
    check_one_hot(logits, labels)?;
    let count = T::from_usize(logits.len()).unwrap();
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.data().iter().zip(labels.data()) {
        // max(x, 0) - x*y + ln(1 + e^-|x|)
        loss = loss + x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid_scalar(x) - y) / count);
    }
    Ok(LossOutput {
        loss: loss / count,
        probs: sigmoid(logits),
        grad: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_logits() {
        let out = softmax_cross_entropy(&t(&[1, 3], &[0.0; 3]), &t(&[1, 3], &[0.0, 1.0, 0.0])).unwrap();
        for &p in out.probs.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((out.loss - 3f64.ln()).abs() < 1e-12);
        assert!((out.loss - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_is_zero_loss() {
        let out = softmax_cross_entropy(&t(&[1, 2], &[800.0, 0.0]), &t(&[1, 2], &[1.0, 0.0])).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.loss.is_finite());
    }

    #[test]
    fn shift_invariance() {
        let a = softmax(&t(&[1, 3], &[1.0, 2.0, 3.0])).unwrap();
        let b = softmax(&t(&[1, 3], &[11.0, 12.0, 13.0])).unwrap();
        // direct evaluation: e^i / sum e^j
        let denom: f64 = (1..=3).map(|i| (i as f64).exp()).sum();
        for i in 0..3 {
            let direct = ((i + 1) as f64).exp() / denom;
            assert!((a.data()[i] - direct).abs() < 1e-12);
            assert!((b.data()[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn non_one_hot_rejected() {
        let logits = t(&[1, 3], &[0.0; 3]);
        for bad in [[1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.5, 0.0]] {
            assert!(matches!(
                softmax_cross_entropy(&logits, &t(&[1, 3], &bad)),
                Err(Error::Input(_))
            ));
        }
    }

    #[test]
    fn sigmoid_zero_logits() {
        let out = sigmoid_binary_loss(&t(&[1, 2], &[0.0, 0.0]), &t(&[1, 2], &[0.0, 1.0])).unwrap();
        assert_eq!(out.probs.data(), &[0.5, 0.5]);
        assert!((out.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_saturation() {
        let out = sigmoid_binary_loss(&t(&[1, 2], &[20.0, -20.0]), &t(&[1, 2], &[1.0, 0.0])).unwrap();
        assert!(out.loss < 1e-8);
    }

    #[test]
    fn sigmoid_requires_two_units() {
        let err = sigmoid_binary_loss(&t(&[1, 3], &[0.0; 3]), &t(&[1, 3], &[1.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
