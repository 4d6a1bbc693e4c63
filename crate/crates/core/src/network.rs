//! Dense feedforward networks with element-wise activations.
//!
//! A [`Network`] with layer sizes `d_0, ..., d_L` holds one weight matrix of
//! shape `d_l x d_(l-1)` and an optional bias of length `d_l` per layer, and
//! evaluates `o_l = phi_l(W_l o_(l-1) + b_l)`. Batches are row-major: one
//! observation per row.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply_inplace(self, z: &mut Array2<f64>) {
        if let Activation::Tanh = self {
            z.mapv_inplace(f64::tanh);
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, out: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => out.mapv(|o| 1.0 - o * o),
            Activation::Identity => Array2::ones(out.raw_dim()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRecord", into = "NetworkRecord")]
pub struct Network {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Option<Array1<f64>>>,
    activations: Vec<Activation>,
}

impl Network {
    /// All-zero network. `has_bias[l]` turns the bias of layer `l + 1` on or off.
    pub fn zeros(layer_dims: &[usize], activations: &[Activation], has_bias: &[bool]) -> Result<Self> {
        check_architecture(layer_dims, activations, has_bias)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_dims[1..]
            .iter()
            .zip(has_bias)
            .map(|(&d, &on)| on.then(|| Array1::zeros(d)))
            .collect();
        Ok(Network {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activations: activations.to_vec(),
        })
    }

    /// Glorot-uniform weights in `[-r, r]`, `r = sqrt(6 / (d_in + d_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        layer_dims: &[usize],
        activations: &[Activation],
        has_bias: &[bool],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Network::zeros(layer_dims, activations, has_bias)?;
        for w in &mut net.weights {
            let (d_out, d_in) = w.dim();
            let r = (6.0 / (d_in + d_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-r..=r));
        }
        Ok(net)
    }

    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Option<Array1<f64>>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::shape("a network needs at least one layer"));
        }
        if biases.len() != weights.len() || activations.len() != weights.len() {
            return Err(Error::shape(format!(
                "{} weight matrices but {} biases and {} activations",
                weights.len(),
                biases.len(),
                activations.len()
            )));
        }
        let mut layer_dims = vec![weights[0].ncols()];
        for (l, w) in weights.iter().enumerate() {
            if w.ncols() != *layer_dims.last().unwrap() {
                return Err(Error::shape(format!(
                    "weight {} has {} columns, previous layer has {} nodes",
                    l + 1,
                    w.ncols(),
                    layer_dims.last().unwrap()
                )));
            }
            if let Some(b) = &biases[l] {
                if b.len() != w.nrows() {
                    return Err(Error::shape(format!(
                        "bias {} has length {}, layer has {} nodes",
                        l + 1,
                        b.len(),
                        w.nrows()
                    )));
                }
            }
            layer_dims.push(w.nrows());
        }
        let net = Network {
            layer_dims,
            weights,
            biases,
            activations,
        };
        if !net.is_finite() {
            return Err(Error::numeric("network parameters must be finite"));
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Option<Array1<f64>>] {
        &self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn has_bias(&self) -> Vec<bool> {
        self.biases.iter().map(Option::is_some).collect()
    }

    /// Mutable view of weight matrix `l` (zero-based).
    pub fn weight_mut(&mut self, l: usize) -> ArrayViewMut2<'_, f64> {
        self.weights[l].view_mut()
    }

    pub fn bias_mut(&mut self, l: usize) -> Option<ArrayViewMut1<'_, f64>> {
        self.biases[l].as_mut().map(|b| b.view_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self
                .biases
                .iter()
                .flatten()
                .all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().flatten().map(|b| b.len()).sum::<usize>()
    }

    /// Layer outputs `o_0 = x, ..., o_L` for a single observation.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Vec<Array1<f64>>> {
        let batch = x.insert_axis(Axis(0));
        let outs = self.forward_batch(batch)?;
        Ok(outs
            .into_iter()
            .map(|o| o.index_axis_move(Axis(0), 0))
            .collect())
    }

    /// Layer outputs for a batch; each entry is `n x d_l`.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("network input must be finite"));
        }
        let mut outs = Vec::with_capacity(self.weights.len() + 1);
        outs.push(inputs.to_owned());
        for l in 0..self.weights.len() {
            let mut z = outs[l].dot(&self.weights[l].t());
            if let Some(b) = &self.biases[l] {
                z += b;
            }
            self.activations[l].apply_inplace(&mut z);
            outs.push(z);
        }
        Ok(outs)
    }

    /// Final-layer output for a batch.
    pub fn predict(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(inputs)?.pop().unwrap())
    }

    /// Mean over rows of the squared Euclidean reconstruction distance.
    pub fn l2_loss(&self, inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_targets(inputs, targets)?;
        let out = self.predict(inputs)?;
        Ok(mean_squared_distance(&out, targets))
    }

    pub fn backprop(&self, inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<Gradients> {
        Ok(self.loss_and_gradients(inputs, targets)?.1)
    }

    /// Loss together with its exact gradient, sharing one forward pass.
    pub fn loss_and_gradients(
        &self,
        inputs: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, Gradients)> {
        self.check_targets(inputs, targets)?;
        let outs = self.forward_batch(inputs)?;
        let n = inputs.nrows() as f64;
        let y = outs.last().unwrap();
        let loss = mean_squared_distance(y, targets);

        let mut grads = Gradients::zeros_like(self);
        // dL/dy for L = (1/n) sum_i ||y_i - t_i||^2
        let mut delta = (y - &targets) * (2.0 / n);
        for l in (0..self.weights.len()).rev() {
            delta *= &self.activations[l].derivative_from_output(&outs[l + 1]);
            grads.d_weights[l] = delta.t().dot(&outs[l]);
            if let Some(db) = grads.d_biases[l].as_mut() {
                *db = delta.sum_axis(Axis(0));
            }
            if l > 0 {
                delta = delta.dot(&self.weights[l]);
            }
        }
        Ok((loss, grads))
    }

    fn check_targets(&self, inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<()> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::shape(format!(
                "{} input rows but {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if targets.ncols() != self.output_dim() {
            return Err(Error::shape(format!(
                "targets have {} columns, network outputs {}",
                targets.ncols(),
                self.output_dim()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::shape("empty batch"));
        }
        Ok(())
    }
}

fn check_architecture(layer_dims: &[usize], activations: &[Activation], has_bias: &[bool]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::shape("need at least an input and an output layer"));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::shape("layer sizes must be positive"));
    }
    let l = layer_dims.len() - 1;
    if activations.len() != l || has_bias.len() != l {
        return Err(Error::shape(format!(
            "{} layers but {} activations and {} bias flags",
            l,
            activations.len(),
            has_bias.len()
        )));
    }
    Ok(())
}

pub(crate) fn mean_squared_distance(out: &Array2<f64>, targets: ArrayView2<'_, f64>) -> f64 {
    let n = out.nrows() as f64;
    Zip::from(out)
        .and(&targets)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
        / n
}

/// Gradient carrier shaped exactly like the owning [`Network`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Option<Array1<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            d_weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            d_biases: net
                .biases
                .iter()
                .map(|b| b.as_ref().map(|b| Array1::zeros(b.raw_dim())))
                .collect(),
        }
    }

    /// Adds `scale * extra[l]` to the weight gradient of every layer in `offset..`.
    pub fn add_weight_terms(&mut self, offset: usize, extra: &[Array2<f64>], scale: f64) {
        for (g, e) in self.d_weights[offset..].iter_mut().zip(extra) {
            g.scaled_add(scale, e);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self
                .d_biases
                .iter()
                .flatten()
                .all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn matches(&self, net: &Network) -> bool {
        self.d_weights.len() == net.weights.len()
            && self
                .d_weights
                .iter()
                .zip(&net.weights)
                .all(|(g, w)| g.dim() == w.dim())
            && self.d_biases.len() == net.biases.len()
            && self.d_biases.iter().zip(&net.biases).all(|(g, b)| match (g, b) {
                (Some(g), Some(b)) => g.len() == b.len(),
                (None, None) => true,
                _ => false,
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UpdateRule {
    PlainSgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        first: Gradients,
        second: Gradients,
    },
}

/// Optimizer state. Adam moments exist only for the Adam rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    learning_rate: f64,
    step_count: u64,
    rule: UpdateRule,
}

impl Optimizer {
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.learning_rate = learning_rate;
    }

    pub fn plain_sgd(learning_rate: f64) -> Result<Self> {
        check_rate(learning_rate)?;
        Ok(Optimizer {
            learning_rate,
            step_count: 0,
            rule: UpdateRule::PlainSgd,
        })
    }

    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn adam(net: &Network, learning_rate: f64) -> Result<Self> {
        Self::adam_with(net, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn adam_with(net: &Network, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        check_rate(learning_rate)?;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
            return Err(Error::config("Adam needs beta1, beta2 in [0, 1) and epsilon > 0"));
        }
        Ok(Optimizer {
            learning_rate,
            step_count: 0,
            rule: UpdateRule::Adam {
                beta1,
                beta2,
                epsilon,
                first: Gradients::zeros_like(net),
                second: Gradients::zeros_like(net),
            },
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn rule(&self) -> &UpdateRule {
        &self.rule
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) {
            return Err(Error::shape("gradients do not match the network"));
        }
        if !grads.is_finite() {
            return Err(Error::numeric("gradient has non-finite entries"));
        }
        self.step_count += 1;
        let lr = self.learning_rate;
        match &mut self.rule {
            UpdateRule::PlainSgd => {
                for (w, g) in net.weights.iter_mut().zip(&grads.d_weights) {
                    w.scaled_add(-lr, g);
                }
                for (b, g) in net.biases.iter_mut().zip(&grads.d_biases) {
                    if let (Some(b), Some(g)) = (b, g) {
                        b.scaled_add(-lr, g);
                    }
                }
            }
            UpdateRule::Adam {
                beta1,
                beta2,
                epsilon,
                first,
                second,
            } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (b1, b2, eps) = (*beta1, *beta2, *epsilon);
                let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                };
                for l in 0..net.weights.len() {
                    Zip::from(&mut net.weights[l])
                        .and(&mut first.d_weights[l])
                        .and(&mut second.d_weights[l])
                        .and(&grads.d_weights[l])
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                    if let (Some(b), Some(m), Some(v), Some(g)) = (
                        net.biases[l].as_mut(),
                        first.d_biases[l].as_mut(),
                        second.d_biases[l].as_mut(),
                        grads.d_biases[l].as_ref(),
                    ) {
                        Zip::from(b)
                            .and(m)
                            .and(v)
                            .and(g)
                            .for_each(|p, m, v, &g| update(p, m, v, g));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_rate(learning_rate: f64) -> Result<()> {
    if learning_rate > 0.0 && learning_rate.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("learning rate must be positive, got {learning_rate}")))
    }
}

/// On-disk form of a [`Network`].
///
/// ```json
/// {
///   "layer_dims": [4, 50, 2],
///   "activations": ["tanh", "identity"],
///   "has_bias": [true, true],
///   "weights": [[[...], ...], ...],   // row-major, weights[l][row][col]
///   "biases": [[...], null]           // null where the layer has no bias
/// }
/// ```
#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    has_bias: Vec<bool>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Option<Vec<f64>>>,
}

impl From<Network> for NetworkRecord {
    fn from(net: Network) -> Self {
        NetworkRecord {
            has_bias: net.has_bias(),
            weights: net
                .weights
                .iter()
                .map(|w| w.outer_iter().map(|row| row.to_vec()).collect())
                .collect(),
            biases: net.biases.iter().map(|b| b.as_ref().map(|b| b.to_vec())).collect(),
            layer_dims: net.layer_dims,
            activations: net.activations,
        }
    }
}

impl TryFrom<NetworkRecord> for Network {
    type Error = Error;

    fn try_from(rec: NetworkRecord) -> Result<Self> {
        let mut weights = Vec::with_capacity(rec.weights.len());
        for (l, rows) in rec.weights.into_iter().enumerate() {
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::shape(format!("weight {} is ragged", l + 1)));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            weights.push(
                Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| Error::shape(e.to_string()))?,
            );
        }
        let biases: Vec<Option<Array1<f64>>> = rec.biases.into_iter().map(|b| b.map(Array1::from)).collect();
        if rec.has_bias.len() != biases.len()
            || rec.has_bias.iter().zip(&biases).any(|(&f, b)| f != b.is_some())
        {
            return Err(Error::shape("has_bias flags disagree with biases"));
        }
        let net = Network::from_parts(weights, biases, rec.activations)?;
        if net.layer_dims != rec.layer_dims {
            return Err(Error::shape(format!(
                "layer_dims {:?} disagree with weight shapes {:?}",
                rec.layer_dims, net.layer_dims
            )));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(dims: &[usize], seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = dims.len() - 1;
        let mut acts = vec![Activation::Tanh; l];
        acts[l - 1] = Activation::Identity;
        let mut net = Network::glorot(dims, &acts, &vec![true; l], &mut rng).unwrap();
        for b in net.biases.iter_mut().flatten() {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        net
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = Network::from_parts(
            vec![Array2::eye(2)],
            vec![Some(Array1::zeros(2))],
            vec![Activation::Identity],
        )
        .unwrap();
        let outs = net.forward(array![3.0, -1.0].view()).unwrap();
        assert_eq!(outs[0], array![3.0, -1.0]);
        assert_eq!(outs[1], array![3.0, -1.0]);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let net = Network::from_parts(
            vec![array![[1.0, 1.0]]],
            vec![Some(array![0.0])],
            vec![Activation::Tanh],
        )
        .unwrap();
        let out = net.forward(array![0.0, 0.0].view()).unwrap();
        assert_eq!(out[1], array![0.0]);
    }

    #[test]
    fn two_layer_forward_composes_single_layers() {
        let net = random_net(&[3, 5, 2], 1);
        let x = array![0.3, -0.7, 1.1];
        let first = Network::from_parts(
            vec![net.weights[0].clone()],
            vec![net.biases[0].clone()],
            vec![net.activations[0]],
        )
        .unwrap();
        let second = Network::from_parts(
            vec![net.weights[1].clone()],
            vec![net.biases[1].clone()],
            vec![net.activations[1]],
        )
        .unwrap();
        let h = first.forward(x.view()).unwrap().pop().unwrap();
        let y = second.forward(h.view()).unwrap().pop().unwrap();
        let direct = net.forward(x.view()).unwrap();
        assert_eq!(direct.len(), 3);
        assert_abs_diff_eq!(direct[2], y, epsilon = 1e-15);
    }

    #[test]
    fn zero_tanh_network_outputs_zero() {
        let net = Network::zeros(&[3, 4, 2], &[Activation::Tanh, Activation::Tanh], &[true, true]).unwrap();
        let out = net.predict(random_matrix(5, 3, 2).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = random_net(&[3, 2], 0);
        assert!(matches!(net.forward(array![1.0, 2.0].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn from_parts_rejects_nonconformable_layers() {
        let res = Network::from_parts(
            vec![Array2::zeros((4, 3)), Array2::zeros((2, 5))],
            vec![None, None],
            vec![Activation::Tanh, Activation::Identity],
        );
        assert!(matches!(res, Err(Error::Shape(_))));
    }

    #[test]
    fn loss_of_perfect_reconstruction_is_zero() {
        let net = Network::from_parts(vec![Array2::eye(3)], vec![None], vec![Activation::Identity]).unwrap();
        let x = random_matrix(6, 3, 3);
        assert_eq!(net.l2_loss(x.view(), x.view()).unwrap(), 0.0);
    }

    #[test]
    fn loss_of_zero_network_is_mean_target_norm() {
        let net = Network::zeros(&[2, 2], &[Activation::Identity], &[true]).unwrap();
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(net.l2_loss(t.view(), t.view()).unwrap(), 1.0);
    }

    #[test]
    fn loss_matches_direct_formula() {
        let net = random_net(&[3, 4, 2], 4);
        let x = random_matrix(7, 3, 5);
        let t = random_matrix(7, 2, 6);
        let mut expected = 0.0;
        for i in 0..7 {
            let y = net.forward(x.row(i)).unwrap().pop().unwrap();
            expected += (&y - &t.row(i)).mapv(|v| v * v).sum();
        }
        expected /= 7.0;
        assert_abs_diff_eq!(net.l2_loss(x.view(), t.view()).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn loss_rejects_row_mismatch() {
        let net = random_net(&[2, 2], 0);
        let x = random_matrix(3, 2, 0);
        let t = random_matrix(4, 2, 0);
        assert!(matches!(net.l2_loss(x.view(), t.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn stationary_residual_has_zero_gradient() {
        let net = random_net(&[3, 4, 2], 7);
        let x = random_matrix(5, 3, 8);
        let t = net.predict(x.view()).unwrap();
        let g = net.backprop(x.view(), t.view()).unwrap();
        assert!(g.d_weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.d_biases.iter().flatten().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn bias_gradient_of_linear_layer_is_twice_mean_residual() {
        // L = mean_i ||W x_i + b - t_i||^2, so dL/db = (2/n) sum_i (y_i - t_i).
        let net = random_net(&[3, 2], 9);
        let x = random_matrix(6, 3, 10);
        let t = random_matrix(6, 2, 11);
        let y = net.predict(x.view()).unwrap();
        let g = net.backprop(x.view(), t.view()).unwrap();
        let expected = (&y - &t).mean_axis(Axis(0)).unwrap() * 2.0;
        assert_abs_diff_eq!(g.d_biases[0].as_ref().unwrap(), &expected, epsilon = 1e-14);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let net = random_net(&[5, 7, 3], 12);
        let x = random_matrix(20, 5, 13);
        let t = random_matrix(20, 3, 14);
        let g = net.backprop(x.view(), t.view()).unwrap();
        let h = 1e-5;
        for l in 0..net.n_layers() {
            for idx in [(0, 0), (1, 2), (2, 4)] {
                let mut plus = net.clone();
                plus.weight_mut(l)[idx] += h;
                let mut minus = net.clone();
                minus.weight_mut(l)[idx] -= h;
                let fd = (plus.l2_loss(x.view(), t.view()).unwrap()
                    - minus.l2_loss(x.view(), t.view()).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(g.d_weights[l][idx], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn plain_sgd_step_follows_formula() {
        let mut net = Network::from_parts(vec![array![[1.0]]], vec![None], vec![Activation::Identity]).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        grads.d_weights[0][[0, 0]] = 2.0;
        let mut opt = Optimizer::plain_sgd(0.1).unwrap();
        opt.step(&mut net, &grads).unwrap();
        assert_abs_diff_eq!(net.weights()[0][[0, 0]], 0.8, epsilon = 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let net0 = random_net(&[3, 4, 2], 15);
        let grads = Gradients::zeros_like(&net0);
        for mut opt in [Optimizer::plain_sgd(0.1).unwrap(), Optimizer::adam(&net0, 0.1).unwrap()] {
            let mut net = net0.clone();
            opt.step(&mut net, &grads).unwrap();
            assert_eq!(net, net0);
        }
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        for scale in [1e-3, 1.0, 1e3] {
            let net0 = random_net(&[2, 2], 16);
            let mut grads = Gradients::zeros_like(&net0);
            grads.d_weights[0].fill(scale);
            grads.d_biases[0].as_mut().unwrap().fill(scale);
            let mut net = net0.clone();
            let mut opt = Optimizer::adam(&net, 0.01).unwrap();
            opt.step(&mut net, &grads).unwrap();
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            let step = &net0.weights()[0] - &net.weights()[0];
            let expected = 0.01 * scale / (scale + 1e-8);
            assert!(step.iter().all(|&s| (s - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn optimizer_rejects_non_finite_gradients() {
        let mut net = random_net(&[2, 2], 17);
        let mut grads = Gradients::zeros_like(&net);
        grads.d_weights[0][[0, 0]] = f64::NAN;
        let mut opt = Optimizer::plain_sgd(0.1).unwrap();
        assert!(matches!(opt.step(&mut net, &grads), Err(Error::Numeric(_))));
        assert!(Optimizer::plain_sgd(0.0).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let mut net = random_net(&[4, 6, 2], 18);
        net.biases[1] = None;
        let text = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.weights().iter().zip(net.weights()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn json_rejects_inconsistent_dims() {
        let net = random_net(&[2, 3], 19);
        let mut value = serde_json::to_value(&net).unwrap();
        value["layer_dims"] = serde_json::json!([2, 4]);
        assert!(serde_json::from_value::<Network>(value).is_err());
    }
}
