use super::tensor::{Scalar, Tensor};

/// Mean softmax cross-entropy over the batch, with the usual max-subtraction
/// so large logits stay finite. Returns the loss and d(loss)/d(logits) =
/// (softmax - onehot) / N.
pub fn softmax_cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> (S, Tensor<S>) {
    let shape = logits.shape();
    assert_eq!(shape.len(), 2, "loss expects (N,K) logits, got {shape:?}");
    let (n, k) = (shape[0], shape[1]);
    assert_eq!(labels.len(), n, "label count mismatch");

    let inv_n = S::from_f64(1.0 / n as f64);
    let mut dlogits = Tensor::zeros(shape);
    let mut loss = S::ZERO;
    for ni in 0..n {
        let label = labels[ni];
        assert!(label < k, "label {label} out of range for {k} classes");
        let row = &logits.data()[ni * k..(ni + 1) * k];
        let mut m = row[0];
        for &v in &row[1..] {
            m = m.maximum(v);
        }
        let mut denom = S::ZERO;
        let drow = &mut dlogits.data_mut()[ni * k..(ni + 1) * k];
        for (d, &v) in drow.iter_mut().zip(row) {
            let e = (v - m).exp();
            *d = e;
            denom += e;
        }
        // -ln p[label] = ln(denom) - (logit - m)
        loss += denom.ln() - (row[label] - m);
        for d in drow.iter_mut() {
            *d = *d / denom * inv_n;
        }
        drow[label] -= inv_n;
    }
    (loss * inv_n, dlogits)
}

/// Softmax probabilities of one logit row (inference path).
pub fn softmax_row<S: Scalar>(row: &[S]) -> Vec<S> {
    let mut m = row[0];
    for &v in &row[1..] {
        m = m.maximum(v);
    }
    let mut out: Vec<S> = row.iter().map(|&v| (v - m).exp()).collect();
    let mut denom = S::ZERO;
    for &v in &out {
        denom += v;
    }
    for v in &mut out {
        *v = *v / denom;
    }
    out
}
