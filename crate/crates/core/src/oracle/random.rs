use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::network::{Layer, ReluNetwork};

/// Random architecture: `n` in `2..=4`, one or two hidden layers, at most
/// `max_neurons` hidden neurons in total.
pub fn random_architecture<R: Rng>(rng: &mut R, max_neurons: usize) -> (usize, Vec<usize>) {
    let n = rng.gen_range(2..=4);
    let depth = rng.gen_range(1..=2);
    let mut widths = Vec::with_capacity(depth);
    let mut left = max_neurons;
    for k in 0..depth {
        let reserve = depth - k - 1;
        let w = rng.gen_range(1..=(left - reserve).min(max_neurons.div_ceil(depth)).max(1));
        widths.push(w);
        left -= w;
    }
    (n, widths)
}

/// Weights uniform in `[-1, 1]`, biases uniform in `[-0.5, 0.5]`.
pub fn random_network<R: Rng>(rng: &mut R, input_dim: usize, widths: &[usize]) -> ReluNetwork {
    let mut prev = input_dim;
    let layers = widths
        .iter()
        .map(|&w| {
            let weights = DMatrix::from_fn(prev, w, |_, _| rng.gen_range(-1.0..=1.0));
            let bias = DVector::from_fn(w, |_, _| rng.gen_range(-0.5..=0.5));
            prev = w;
            Layer { weights, bias }
        })
        .collect();
    let head = DVector::from_fn(prev, |_, _| rng.gen_range(-1.0..=1.0));
    let bias = rng.gen_range(-0.5..=0.5);
    ReluNetwork::new(input_dim, layers, head, bias).expect("well-formed random network")
}
