#![allow(dead_code)]

use ndarray::{Array1, Array2};
use pathlasso::network::{Activation, Network};
use pathlasso::trainer::Autoencoder;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform entries in `[-1, 1]`, each zeroed with probability `zero_prob`.
pub fn random_matrix(rng: &mut ChaCha8Rng, shape: (usize, usize), zero_prob: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < zero_prob {
            0.0
        } else {
            rng.random_range(-1.0..=1.0)
        }
    })
}

pub fn random_nonneg(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(0.0..1.0))
}

/// Weights for node counts `dims` (input first), in network order.
pub fn random_weights(rng: &mut ChaCha8Rng, dims: &[usize], zero_prob: f64) -> Vec<Array2<f64>> {
    dims.windows(2)
        .map(|w| random_matrix(rng, (w[1], w[0]), zero_prob))
        .collect()
}

pub fn random_dims(rng: &mut ChaCha8Rng, layers: usize, max_dim: usize) -> Vec<usize> {
    (0..=layers).map(|_| rng.random_range(1..=max_dim)).collect()
}

/// tanh on every layer but the last, random biases.
pub fn tanh_net(rng: &mut ChaCha8Rng, weights: Vec<Array2<f64>>) -> Network {
    let n = weights.len();
    let biases = weights
        .iter()
        .map(|w| Some(Array1::from_shape_simple_fn(w.nrows(), || rng.random_range(-0.5..0.5))))
        .collect();
    let mut activations = vec![Activation::Tanh; n];
    activations[n - 1] = Activation::Identity;
    Network::from_parts(weights, biases, activations).unwrap()
}

/// Autoencoder `d_x -> h -> d_z -> h -> d_x` with random weights and biases.
pub fn random_autoencoder(rng: &mut ChaCha8Rng, d_x: usize, h: usize, d_z: usize) -> Autoencoder {
    let enc = random_weights(rng, &[d_x, h, d_z], 0.0);
    let dec = random_weights(rng, &[d_z, h, d_x], 0.0);
    let enc = tanh_net(rng, enc);
    let dec = tanh_net(rng, dec);
    Autoencoder::from_parts(&enc, &dec).unwrap()
}

pub fn random_inputs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.5..1.5))
}

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    let scale = expected.abs().max(1.0);
    assert!(
        (actual - expected).abs() <= tol * scale,
        "{what}: {actual} vs {expected} (tol {tol})"
    );
}

/// Random autoencoder with `d_x <= 4`, hidden width `<= 4`, `d_z <= 3`.
pub fn small_autoencoder(rng: &mut ChaCha8Rng) -> Autoencoder {
    let (d_x, h, d_z) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=3));
    random_autoencoder(rng, d_x, h, d_z)
}
