use super::tensor::{Scalar, Tensor};

/// One SGD update with momentum and decoupled-from-nothing weight decay:
/// v <- momentum*v + grad + wd*param; param <- param - lr*v.
pub fn sgd_step<S: Scalar>(
    param: &mut [S],
    grad: &[S],
    velocity: &mut [S],
    lr: S,
    momentum: S,
    weight_decay: S,
) {
    assert_eq!(param.len(), grad.len());
    assert_eq!(param.len(), velocity.len());
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
}

/// Momentum-SGD state for a fixed parameter list. Velocity buffers are keyed
/// by position, so the caller must present parameters in a stable order.
pub struct Sgd<S> {
    pub lr: S,
    pub momentum: S,
    pub weight_decay: S,
    velocities: Vec<Tensor<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(lr: S, momentum: S, weight_decay: S) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            velocities: Vec::new(),
        }
    }

    /// Applies one step to `params`, skipping indices in `frozen`.
    /// `params` is a list of (value, grad) pairs.
    pub fn step(&mut self, params: &mut [(&mut Tensor<S>, &Tensor<S>)], frozen: &[bool]) {
        if self.velocities.is_empty() {
            self.velocities = params
                .iter()
                .map(|(value, _)| Tensor::zeros(value.shape()))
                .collect();
        }
        assert_eq!(params.len(), self.velocities.len(), "parameter list changed size");
        assert_eq!(params.len(), frozen.len());
        for (i, (value, grad)) in params.iter_mut().enumerate() {
            if frozen[i] {
                continue;
            }
            sgd_step(
                value.data_mut(),
                grad.data(),
                self.velocities[i].data_mut(),
                self.lr,
                self.momentum,
                self.weight_decay,
            );
        }
    }
}
