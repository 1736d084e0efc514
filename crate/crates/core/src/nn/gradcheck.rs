//! Central finite-difference verification of analytic gradients, run in f64.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Layer;
use super::tensor::Tensor;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Scalar probe loss: a fixed random weighting of the outputs, so every
/// output coordinate influences the gradient.
fn probe_loss<L: Layer<f64>>(layer: &mut L, input: &Tensor<f64>, weights: &Tensor<f64>) -> f64 {
    let out = layer.forward(input);
    out.data()
        .iter()
        .zip(weights.data())
        .map(|(&o, &w)| o * w)
        .sum()
}

/// Checks the layer's backward pass against central differences
/// (f(x+eps) - f(x-eps)) / 2eps over every input and parameter coordinate.
/// Returns the maximum relative error.
pub fn finite_diff_check<L: Layer<f64>>(layer: &mut L, input: &Tensor<f64>, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let out = layer.forward(input);
    let weights = Tensor::from_vec(
        out.shape(),
        (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );

    layer.zero_grads();
    let dinput = layer.backward(&weights);
    let param_grads: Vec<Tensor<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let mut max_err: f64 = 0.0;

    for i in 0..input.len() {
        let mut plus = input.clone();
        plus.data_mut()[i] += eps;
        let l_plus = probe_loss(layer, &plus, &weights);
        let mut minus = input.clone();
        minus.data_mut()[i] -= eps;
        let l_minus = probe_loss(layer, &minus, &weights);
        let numeric = (l_plus - l_minus) / (2.0 * eps);
        max_err = max_err.max(relative_error(dinput.data()[i], numeric));
    }

    let n_params = param_grads.len();
    for pi in 0..n_params {
        let len = param_grads[pi].len();
        for j in 0..len {
            {
                let mut ps = layer.params_mut();
                ps[pi].value.data_mut()[j] += eps;
            }
            let l_plus = probe_loss(layer, input, &weights);
            {
                let mut ps = layer.params_mut();
                ps[pi].value.data_mut()[j] -= 2.0 * eps;
            }
            let l_minus = probe_loss(layer, input, &weights);
            {
                let mut ps = layer.params_mut();
                ps[pi].value.data_mut()[j] += eps;
            }
            let numeric = (l_plus - l_minus) / (2.0 * eps);
            max_err = max_err.max(relative_error(param_grads[pi].data()[j], numeric));
        }
    }
    max_err
}
