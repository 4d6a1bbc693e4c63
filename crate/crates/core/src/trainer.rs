//! Path-lasso training of autoencoders.
//!
//! The encoder and decoder share one group per (input, latent) pair: every
//! path from input `i` to latent `j` in the encoder together with every path
//! from latent `j` to output `i` in the decoder. The symmetric connection
//! matrix `sqrt(E_L^2 ... E_1^2 + (D_L^2 ... D_1^2)^T)` (shape `d_z x d_x`)
//! holds the group norms.
//!
//! Training runs in stages:
//!
//! 1. Adam on the reconstruction loss.
//! 2. Optionally, Adam on the loss plus `lambda * sum(W_PL)` (a smooth
//!    surrogate that drives weak connections towards zero).
//! 3. Proximal path-lasso steps with adaptive per-connection penalties
//!    `lambda / W_PL^gamma` taken from the previous stage.
//! 4. Adam on the reconstruction loss with every link zeroed in stage 3
//!    frozen at zero.
//!
//! An exclusive-lasso term on the rows of the symmetric connection matrix
//! (one group per latent dimension) is added during the first three stages.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::factorization::{
    block_solve, boolean_threshold, nonzero_pattern, penalized_path_matrix, sever_unwanted_paths,
    solve, BlockSplits, FactorizationProblem,
};
use crate::network::{Activation, Network, Optimizer};
use crate::penalties::{
    adaptive_penalties, connection_matrix, exclusive_lasso, exclusive_lasso_conn_grad, sqrt_backward,
    square_product, square_product_vjp, ConnectionMatrix, ExclusiveGroups, PRUNE_IMMEDIATELY,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    /// `d_x, hidden..., d_z`
    pub encoder_dims: Vec<usize>,
    /// `d_z, hidden..., d_x`
    pub decoder_dims: Vec<usize>,
    pub encoder_bias: Vec<bool>,
    pub decoder_bias: Vec<bool>,
}

impl AutoencoderSpec {
    /// Mirror-image encoder and decoder with biases on every layer.
    pub fn symmetric(input_dim: usize, hidden: &[usize], latent_dim: usize) -> Self {
        let mut encoder_dims = vec![input_dim];
        encoder_dims.extend_from_slice(hidden);
        encoder_dims.push(latent_dim);
        let decoder_dims: Vec<usize> = encoder_dims.iter().rev().copied().collect();
        let layers = encoder_dims.len() - 1;
        AutoencoderSpec {
            encoder_dims,
            decoder_dims,
            encoder_bias: vec![true; layers],
            decoder_bias: vec![true; layers],
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.encoder_bias.iter_mut().for_each(|b| *b = false);
        self.decoder_bias.iter_mut().for_each(|b| *b = false);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_dims[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_dims.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        let (e, d) = (&self.encoder_dims, &self.decoder_dims);
        if e.len() < 2 || d.len() < 2 {
            return Err(Error::shape("encoder and decoder need at least one layer each"));
        }
        if e.last() != d.first() || e.first() != d.last() {
            return Err(Error::shape(format!(
                "encoder {e:?} and decoder {d:?} do not meet at the latent and data dimensions"
            )));
        }
        if self.encoder_bias.len() != e.len() - 1 || self.decoder_bias.len() != d.len() - 1 {
            return Err(Error::shape("one bias flag per layer is required"));
        }
        Ok(())
    }

    fn activations(dims: &[usize]) -> Vec<Activation> {
        let mut acts = vec![Activation::Tanh; dims.len() - 1];
        *acts.last_mut().unwrap() = Activation::Identity;
        acts
    }

    /// Glorot-initialized autoencoder.
    pub fn build(&self, rng: &mut ChaCha8Rng) -> Result<Autoencoder> {
        self.validate()?;
        let encoder = Network::glorot(
            &self.encoder_dims,
            &Self::activations(&self.encoder_dims),
            &self.encoder_bias,
            rng,
        )?;
        let decoder = Network::glorot(
            &self.decoder_dims,
            &Self::activations(&self.decoder_dims),
            &self.decoder_bias,
            rng,
        )?;
        Autoencoder::from_parts(&encoder, &decoder)
    }
}

/// Encoder and decoder stored back to back as one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    net: Network,
    encoder_layers: usize,
}

impl Autoencoder {
    pub fn from_parts(encoder: &Network, decoder: &Network) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() || encoder.input_dim() != decoder.output_dim() {
            return Err(Error::shape(format!(
                "encoder {:?} and decoder {:?} do not compose into an autoencoder",
                encoder.layer_dims(),
                decoder.layer_dims()
            )));
        }
        let weights = encoder.weights().iter().chain(decoder.weights()).cloned().collect();
        let biases = encoder.biases().iter().chain(decoder.biases()).cloned().collect();
        let acts = encoder.activations().iter().chain(decoder.activations()).copied().collect();
        Ok(Autoencoder {
            net: Network::from_parts(weights, biases, acts)?,
            encoder_layers: encoder.n_layers(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn encoder_layers(&self) -> usize {
        self.encoder_layers
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.net.layer_dims()[self.encoder_layers]
    }

    pub fn encoder_weights(&self) -> &[Array2<f64>] {
        &self.net.weights()[..self.encoder_layers]
    }

    pub fn decoder_weights(&self) -> &[Array2<f64>] {
        &self.net.weights()[self.encoder_layers..]
    }

    fn sub_network(&self, range: std::ops::Range<usize>) -> Network {
        Network::from_parts(
            self.net.weights()[range.clone()].to_vec(),
            self.net.biases()[range.clone()].to_vec(),
            self.net.activations()[range].to_vec(),
        )
        .expect("slice of a valid network")
    }

    pub fn encoder(&self) -> Network {
        self.sub_network(0..self.encoder_layers)
    }

    pub fn decoder(&self) -> Network {
        self.sub_network(self.encoder_layers..self.net.n_layers())
    }

    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let outs = self.net.forward_batch(x)?;
        Ok(outs[self.encoder_layers].clone())
    }

    pub fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.net.predict(x)
    }

    pub fn connection_matrix(&self) -> Result<ConnectionMatrix> {
        symmetric_connection_matrix(self.encoder_weights(), self.decoder_weights())
    }

    pub fn encoder_connection_matrix(&self) -> Result<ConnectionMatrix> {
        connection_matrix(self.encoder_weights())
    }

    pub fn decoder_connection_matrix(&self) -> Result<ConnectionMatrix> {
        connection_matrix(self.decoder_weights())
    }
}

/// `sqrt(E_L^2 ... E_1^2 + (D_L^2 ... D_1^2)^T)`, shape `d_z x d_x`.
pub fn symmetric_connection_matrix(
    encoder_weights: &[Array2<f64>],
    decoder_weights: &[Array2<f64>],
) -> Result<ConnectionMatrix> {
    let enc = square_product(encoder_weights)?;
    let dec = square_product(decoder_weights)?;
    if enc.dim() != (dec.ncols(), dec.nrows()) {
        return Err(Error::shape(format!(
            "encoder connections {:?} and decoder connections {:?} are not transposes",
            enc.dim(),
            dec.dim()
        )));
    }
    ConnectionMatrix::new((enc + &dec.t()).mapv(f64::sqrt))
}

/// Gradient of `<upstream, symmetric_connection_matrix(E, D)>` with respect to
/// every autoencoder weight, encoder layers first.
pub fn symmetric_connection_vjp(
    encoder_weights: &[Array2<f64>],
    decoder_weights: &[Array2<f64>],
    upstream: &Array2<f64>,
) -> Result<Vec<Array2<f64>>> {
    let conn = symmetric_connection_matrix(encoder_weights, decoder_weights)?;
    if conn.dim() != upstream.dim() {
        return Err(Error::shape("upstream gradient does not match the connection matrix"));
    }
    let d_square = sqrt_backward(&conn, upstream);
    let mut grads = square_product_vjp(encoder_weights, &d_square)?;
    grads.extend(square_product_vjp(decoder_weights, &d_square.t().to_owned())?);
    Ok(grads)
}

/// Smooth penalties on the symmetric connection matrix:
/// `path_weight * sum(W_PL) + exclusive_weight * sum_rows(row sum of W_PL)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionPenalty {
    pub path_weight: f64,
    pub exclusive_weight: f64,
}

impl ConnectionPenalty {
    pub fn none() -> Self {
        ConnectionPenalty {
            path_weight: 0.0,
            exclusive_weight: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.path_weight == 0.0 && self.exclusive_weight == 0.0
    }

    /// Penalty value and its gradient for every autoencoder weight.
    pub fn value_and_grad(&self, ae: &Autoencoder) -> Result<(f64, Vec<Array2<f64>>)> {
        let conn = ae.connection_matrix()?;
        let groups = ExclusiveGroups::rows(conn.dim());
        let value = self.path_weight * conn.values().sum()
            + self.exclusive_weight * exclusive_lasso(&conn, &groups)?;
        let upstream = Array2::from_elem(conn.dim(), self.path_weight)
            + exclusive_lasso_conn_grad(&conn, &groups)? * self.exclusive_weight;
        let grads = symmetric_connection_vjp(ae.encoder_weights(), ae.decoder_weights(), &upstream)?;
        Ok((value, grads))
    }

    pub fn value(&self, ae: &Autoencoder) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let conn = ae.connection_matrix()?;
        let groups = ExclusiveGroups::rows(conn.dim());
        Ok(self.path_weight * conn.values().sum() + self.exclusive_weight * exclusive_lasso(&conn, &groups)?)
    }
}

/// Links held at zero, one boolean matrix per weight matrix (`true` = frozen).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroMask {
    pub layers: Vec<Array2<bool>>,
}

impl ZeroMask {
    pub fn empty(net: &Network) -> Self {
        ZeroMask {
            layers: net.weights().iter().map(|w| Array2::from_elem(w.raw_dim(), false)).collect(),
        }
    }

    pub fn full(net: &Network) -> Self {
        ZeroMask {
            layers: net.weights().iter().map(|w| Array2::from_elem(w.raw_dim(), true)).collect(),
        }
    }

    /// Every link that is exactly zero.
    pub fn from_zeros(net: &Network) -> Self {
        ZeroMask {
            layers: net.weights().iter().map(|w| w.mapv(|v| v == 0.0)).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.layers.iter().map(|m| m.iter().filter(|&&b| b).count()).sum()
    }
}

/// Forces every masked link of `net` to zero.
pub fn freeze_mask_apply(net: &mut Network, mask: &ZeroMask) -> Result<()> {
    if mask.layers.len() != net.n_layers()
        || mask.layers.iter().zip(net.weights()).any(|(m, w)| m.dim() != w.dim())
    {
        return Err(Error::shape("zero mask does not match the network"));
    }
    for (l, m) in mask.layers.iter().enumerate() {
        Zip::from(net.weight_mut(l)).and(m).for_each(|w, &frozen| {
            if frozen {
                *w = 0.0;
            }
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorizationSettings {
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub l1: f64,
    pub l2: f64,
    /// Near-equal blocks per dimension for the block-parallel solver; 1 disables it.
    pub blocks: usize,
    pub boolean_threshold: bool,
}

impl Default for FactorizationSettings {
    fn default() -> Self {
        FactorizationSettings {
            max_sweeps: 100,
            tolerance: 1e-8,
            l1: 0.0,
            l2: 0.0,
            blocks: 1,
            boolean_threshold: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageLimits {
    pub max_epochs: usize,
    /// Evaluations without sufficient validation improvement before stopping.
    pub patience: usize,
    pub min_improvement: f64,
    /// Overrides the configuration-wide learning rate for this stage.
    pub learning_rate: Option<f64>,
    /// Multiplies the learning rate of an Adam stage by `factor` after every
    /// `patience` evaluations without improvement.
    pub decay: Option<PlateauDecay>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauDecay {
    pub patience: usize,
    pub factor: f64,
}

impl Default for StageLimits {
    fn default() -> Self {
        StageLimits {
            max_epochs: 2000,
            patience: 20,
            min_improvement: 1e-5,
            learning_rate: None,
            decay: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub gamma: f64,
    /// Defaults to `0.1 * lambda`.
    pub exclusive_weight: Option<f64>,
    /// Path weight of the substitution stage; defaults to `lambda`.
    pub substitution_lambda: Option<f64>,
    pub substitution: bool,
    pub adam_lr: f64,
    pub prox_lr: f64,
    /// Mini-batch size for the Adam stages; `None` is full batch.
    pub batch_size: Option<usize>,
    /// Mini-batch size for the proximal stage; `None` is full batch.
    pub prox_batch_size: Option<usize>,
    pub seed: u64,
    pub stage1: StageLimits,
    pub substitution_limits: StageLimits,
    pub stage2: StageLimits,
    pub stage3: StageLimits,
    pub factorization: FactorizationSettings,
    /// Symmetric connections below this are treated as pruned.
    pub prune_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.0,
            gamma: 2.0,
            exclusive_weight: None,
            substitution_lambda: None,
            substitution: true,
            adam_lr: 1e-3,
            prox_lr: 1e-2,
            batch_size: None,
            prox_batch_size: None,
            seed: 0,
            stage1: StageLimits::default(),
            substitution_limits: StageLimits::default(),
            stage2: StageLimits::default(),
            stage3: StageLimits::default(),
            factorization: FactorizationSettings::default(),
            prune_tol: 1e-12,
        }
    }
}

impl TrainConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        TrainConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn exclusive_weight(&self) -> f64 {
        self.exclusive_weight.unwrap_or(0.1 * self.lambda)
    }

    /// Step size of the proximal stage.
    pub fn proximal_lr(&self) -> f64 {
        self.stage2.learning_rate.unwrap_or(self.prox_lr)
    }

    pub fn substitution_lambda(&self) -> f64 {
        self.substitution_lambda.unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let limits = [&self.stage1, &self.substitution_limits, &self.stage2, &self.stage3];
        if !(self.lambda >= 0.0) || !(self.gamma > 0.0) || !(self.exclusive_weight() >= 0.0) {
            return Err(Error::config("need lambda >= 0, gamma > 0, exclusive_weight >= 0"));
        }
        if !(self.substitution_lambda() >= 0.0) {
            return Err(Error::config("substitution_lambda must be non-negative"));
        }
        if !(self.adam_lr > 0.0) || !(self.prox_lr > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if limits.iter().any(|l| l.max_epochs == 0 || l.patience == 0) {
            return Err(Error::config("epochs and patience must be positive"));
        }
        if limits.iter().any(|l| l.learning_rate.is_some_and(|r| !(r > 0.0))) {
            return Err(Error::config("learning rates must be positive"));
        }
        if limits
            .iter()
            .filter_map(|l| l.decay)
            .any(|d| d.patience == 0 || !(d.factor > 0.0 && d.factor <= 1.0))
        {
            return Err(Error::config("decay needs positive patience and a factor in (0, 1]"));
        }
        if self.batch_size == Some(0) || self.prox_batch_size == Some(0) {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.factorization.max_sweeps == 0 || !(self.factorization.tolerance > 0.0) || self.factorization.blocks == 0 {
            return Err(Error::config("invalid factorization settings"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation reconstruction loss per epoch.
    pub val_loss: Vec<f64>,
    /// Validation objective used for early stopping (loss plus active penalties).
    pub val_objective: Vec<f64>,
    pub epochs: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
    pub connections: ConnectionMatrix,
    pub connection_count: usize,
    pub zero_mask: ZeroMask,
    /// Adaptive per-connection penalties of the proximal stage.
    pub penalties: Option<Array2<f64>>,
}

impl TrainReport {
    /// Copy with wall-clock times zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.stages.iter_mut().for_each(|s| s.seconds = 0.0);
        r
    }

    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Standardized training and validation rows.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Array2<f64>,
    pub val: Array2<f64>,
}

impl TrainData {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let split = data.split()?;
        Ok(TrainData {
            train: data.model_rows(&split.train),
            val: data.model_rows(&split.val),
        })
    }
}

struct EarlyStopping {
    best: f64,
    since: usize,
    limits: StageLimits,
}

impl EarlyStopping {
    fn new(limits: &StageLimits) -> Self {
        EarlyStopping {
            best: f64::INFINITY,
            since: 0,
            limits: limits.clone(),
        }
    }

    /// Records a validation value; returns (is new best, should stop).
    fn observe(&mut self, value: f64) -> (bool, bool) {
        let improved = value < self.best;
        if value < self.best - self.limits.min_improvement {
            self.since = 0;
        } else {
            self.since += 1;
        }
        if improved {
            self.best = value;
        }
        (improved, self.since >= self.limits.patience)
    }
}

fn batches(n: usize, batch_size: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    match batch_size {
        Some(b) if b < n => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks(b).map(<[usize]>::to_vec).collect()
        }
        _ => vec![(0..n).collect()],
    }
}

fn training_error(stage: &str, epoch: usize, message: impl Into<String>) -> Error {
    Error::Training {
        stage: stage.to_string(),
        epoch,
        message: message.into(),
    }
}

/// Extra smooth term added to the reconstruction loss in an Adam stage.
pub(crate) type SmoothPenalty<'a> = dyn Fn(&Autoencoder) -> Result<(f64, Vec<Array2<f64>>)> + 'a;

/// Adam on the reconstruction loss plus `penalty`, early-stopped on the
/// validation objective; the best validation state (the starting state
/// included) is restored at the end.
pub(crate) fn adam_stage(
    name: &str,
    ae: &mut Autoencoder,
    data: &TrainData,
    lr: f64,
    batch_size: Option<usize>,
    limits: &StageLimits,
    penalty: Option<&SmoothPenalty<'_>>,
    mask: Option<&ZeroMask>,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    let start = Instant::now();
    let mut opt = Optimizer::adam(&ae.net, lr)?;
    let mut stop = EarlyStopping::new(limits);
    let mut best = ae.clone();
    let mut report = StageReport {
        name: name.to_string(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_objective: Vec::new(),
        epochs: 0,
        seconds: 0.0,
    };
    if let Some(m) = mask {
        freeze_mask_apply(&mut ae.net, m)?;
    }
    // the starting state competes for best, so a stage never ends worse than it began
    let initial = ae.net.l2_loss(data.val.view(), data.val.view())?
        + penalty.map(|p| p(ae).map(|(v, _)| v)).transpose()?.unwrap_or(0.0);
    if initial.is_finite() {
        stop.best = initial;
    }
    for epoch in 0..limits.max_epochs {
        let mut epoch_loss = 0.0;
        let parts = batches(data.train.nrows(), batch_size, rng);
        for idx in &parts {
            let batch = data.train.select(Axis(0), idx);
            let (loss, mut grads) = ae
                .net
                .loss_and_gradients(batch.view(), batch.view())
                .map_err(|e| training_error(name, epoch, e.to_string()))?;
            let mut total = loss;
            if let Some(p) = penalty {
                let (value, extra) = p(ae)?;
                total += value;
                grads.add_weight_terms(0, &extra, 1.0);
            }
            if !total.is_finite() {
                return Err(training_error(name, epoch, "training loss is not finite"));
            }
            epoch_loss += total * idx.len() as f64;
            opt.step(&mut ae.net, &grads)
                .map_err(|e| training_error(name, epoch, e.to_string()))?;
            if let Some(m) = mask {
                freeze_mask_apply(&mut ae.net, m)?;
            }
        }
        let val_loss = ae.net.l2_loss(data.val.view(), data.val.view())?;
        let val_objective = val_loss + penalty.map(|p| p(ae).map(|(v, _)| v)).transpose()?.unwrap_or(0.0);
        if !val_objective.is_finite() {
            return Err(training_error(name, epoch, "validation loss is not finite"));
        }
        report.train_loss.push(epoch_loss / data.train.nrows() as f64);
        report.val_loss.push(val_loss);
        report.val_objective.push(val_objective);
        report.epochs = epoch + 1;
        let (improved, done) = stop.observe(val_objective);
        if improved {
            best.clone_from(ae);
        }
        if done {
            break;
        }
        if let Some(d) = limits.decay {
            if stop.since > 0 && stop.since % d.patience == 0 {
                opt.set_learning_rate(opt.learning_rate() * d.factor);
            }
        }
    }
    *ae = best;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Stage-one training: Adam on the reconstruction loss plus the exclusive term.
pub fn plain_stage(ae: &mut Autoencoder, data: &TrainData, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<StageReport> {
    let penalty = ConnectionPenalty {
        path_weight: 0.0,
        exclusive_weight: config.exclusive_weight(),
    };
    let f = move |ae: &Autoencoder| penalty.value_and_grad(ae);
    adam_stage(
        "stage1",
        ae,
        data,
        config.stage1.learning_rate.unwrap_or(config.adam_lr),
        config.batch_size,
        &config.stage1,
        (!penalty.is_zero()).then_some(&f as &SmoothPenalty<'_>),
        None,
        rng,
    )
}

/// Adam on the loss plus `lambda * sum(W_PL)` and the exclusive term.
/// Weak connections end up small but not exactly zero.
pub fn substitution_stage(
    ae: &mut Autoencoder,
    data: &TrainData,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    let penalty = ConnectionPenalty {
        path_weight: config.substitution_lambda(),
        exclusive_weight: config.exclusive_weight(),
    };
    let f = move |ae: &Autoencoder| penalty.value_and_grad(ae);
    adam_stage(
        "substitution",
        ae,
        data,
        config.substitution_limits.learning_rate.unwrap_or(config.adam_lr),
        config.batch_size,
        &config.substitution_limits,
        (!penalty.is_zero()).then_some(&f as &SmoothPenalty<'_>),
        None,
        rng,
    )
}

/// Bookkeeping from one proximal path step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub loss: f64,
    pub sweeps: [usize; 2],
    pub threshold_mismatch: [usize; 2],
    pub links_cut: [usize; 2],
}

fn link_factorization(
    side: &'static str,
    weights: &[Array2<f64>],
    target: Array2<f64>,
    settings: &FactorizationSettings,
) -> Result<(Vec<Array2<f64>>, usize, usize, usize)> {
    let wrap = |e: Error| Error::Step {
        side,
        source: Box::new(e),
    };
    // product order is W_L ... W_1
    let seeds: Vec<Array2<f64>> = weights.iter().rev().map(|w| w.mapv(f64::abs)).collect();
    let pattern = nonzero_pattern(&target);
    let problem = FactorizationProblem {
        target,
        seeds,
        l1: settings.l1,
        l2: settings.l2,
        max_sweeps: settings.max_sweeps,
        tolerance: settings.tolerance,
    };
    let result = if settings.blocks > 1 {
        let mut dims: Vec<usize> = problem.seeds.iter().map(|s| s.nrows()).collect();
        dims.push(problem.seeds.last().unwrap().ncols());
        block_solve(&problem, &BlockSplits::even(&dims, settings.blocks))
    } else {
        solve(&problem)
    }
    .map_err(wrap)?;
    let sweeps = result.objective_trace.len();
    // thresholding repairs the zero pattern of early-stopped solves only
    let (mut factors, mismatch) = if settings.boolean_threshold && !result.converged {
        let out = boolean_threshold(&result, &pattern).map_err(wrap)?;
        (out.factors, out.mismatch)
    } else {
        (result.factors, 0)
    };
    let cut = sever_unwanted_paths(&mut factors, &pattern).map_err(wrap)?;
    factors.reverse();
    Ok((factors, sweeps, mismatch, cut))
}

/// One proximal path-lasso step on a batch.
///
/// `thresholds` holds `alpha * lambda_(j,i)` per connection (`d_z x d_x`,
/// `+inf` prunes). The step takes a plain gradient step on the
/// reconstruction loss plus the exclusive term, shrinks every symmetric
/// group by `max(1 - threshold / W_PL, 0)`, translates the shrunk path sums
/// of each side back into link magnitudes bounded by the post-gradient
/// weights, and restores the post-gradient signs.
pub fn proximal_path_step(
    ae: &mut Autoencoder,
    batch: ArrayView2<'_, f64>,
    config: &TrainConfig,
    thresholds: &Array2<f64>,
) -> Result<StepDiagnostics> {
    let shape = (ae.latent_dim(), ae.input_dim());
    if thresholds.dim() != shape {
        return Err(Error::shape(format!(
            "thresholds {:?}, connection matrix {:?}",
            thresholds.dim(),
            shape
        )));
    }
    let (loss, mut grads) = ae.net.loss_and_gradients(batch, batch)?;
    let exclusive = ConnectionPenalty {
        path_weight: 0.0,
        exclusive_weight: config.exclusive_weight(),
    };
    if !exclusive.is_zero() {
        let (_, extra) = exclusive.value_and_grad(ae)?;
        grads.add_weight_terms(0, &extra, 1.0);
    }
    Optimizer::plain_sgd(config.proximal_lr())?.step(&mut ae.net, &grads)?;

    let conn = ae.connection_matrix()?;
    let enc_target = penalized_path_matrix(ae.encoder_weights(), &conn, thresholds)?;
    let conn_t = ConnectionMatrix::new(conn.values().t().to_owned())?;
    let dec_target = penalized_path_matrix(ae.decoder_weights(), &conn_t, &thresholds.t().to_owned())?;

    let settings = &config.factorization;
    let (enc, s0, m0, c0) = link_factorization("encoder", ae.encoder_weights(), enc_target, settings)?;
    let (dec, s1, m1, c1) = link_factorization("decoder", ae.decoder_weights(), dec_target, settings)?;
    let split = ae.encoder_layers;
    for (l, magnitude) in enc.into_iter().chain(dec).enumerate() {
        let mut w = ae.net.weight_mut(l);
        Zip::from(&mut w).and(&magnitude).for_each(|w, &m| *w = w.signum() * m);
    }
    debug_assert_eq!(split, ae.encoder_layers);
    Ok(StepDiagnostics {
        loss,
        sweeps: [s0, s1],
        threshold_mismatch: [m0, m1],
        links_cut: [c0, c1],
    })
}

/// `sum lambda_(j,i) * W_PL_(j,i)` over connections with finite penalties.
fn adaptive_path_penalty(conn: &ConnectionMatrix, penalties: &Array2<f64>) -> f64 {
    Zip::from(conn.values())
        .and(penalties)
        .fold(0.0, |acc, &c, &p| if c > 0.0 && p.is_finite() { acc + p * c } else { acc })
}

/// Proximal path-lasso stage. Connections that reach zero are marked for
/// immediate pruning in every later step, so they stay at zero.
pub fn proximal_stage(
    ae: &mut Autoencoder,
    data: &TrainData,
    config: &TrainConfig,
    penalties: &Array2<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    let name = "stage2";
    let start = Instant::now();
    let mut thresholds = penalties.mapv(|p| if p.is_finite() { config.proximal_lr() * p } else { PRUNE_IMMEDIATELY });
    let mut live_penalties = penalties.clone();
    let exclusive = ConnectionPenalty {
        path_weight: 0.0,
        exclusive_weight: config.exclusive_weight(),
    };
    let mut stop = EarlyStopping::new(&config.stage2);
    let mut report = StageReport {
        name: name.to_string(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_objective: Vec::new(),
        epochs: 0,
        seconds: 0.0,
    };
    for epoch in 0..config.stage2.max_epochs {
        let mut epoch_loss = 0.0;
        for idx in batches(data.train.nrows(), config.prox_batch_size, rng) {
            let batch = data.train.select(Axis(0), &idx);
            let diag = proximal_path_step(ae, batch.view(), config, &thresholds)
                .map_err(|e| training_error(name, epoch, e.to_string()))?;
            if !diag.loss.is_finite() {
                return Err(training_error(name, epoch, "training loss is not finite"));
            }
            epoch_loss += diag.loss * idx.len() as f64;
            let conn = ae.connection_matrix()?;
            Zip::from(&mut thresholds)
                .and(&mut live_penalties)
                .and(conn.values())
                .for_each(|t, p, &c| {
                    if c < config.prune_tol {
                        *t = PRUNE_IMMEDIATELY;
                        *p = PRUNE_IMMEDIATELY;
                    }
                });
        }
        let conn = ae.connection_matrix()?;
        let val_loss = ae.net.l2_loss(data.val.view(), data.val.view())?;
        let val_objective = val_loss + adaptive_path_penalty(&conn, &live_penalties) + exclusive.value(ae)?;
        if !val_objective.is_finite() {
            return Err(training_error(name, epoch, "validation objective is not finite"));
        }
        report.train_loss.push(epoch_loss / data.train.nrows() as f64);
        report.val_loss.push(val_loss);
        report.val_objective.push(val_objective);
        report.epochs = epoch + 1;
        if stop.observe(val_objective).1 {
            break;
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Unpenalized Adam with every masked link held at zero.
pub fn refit_stage(
    ae: &mut Autoencoder,
    data: &TrainData,
    config: &TrainConfig,
    mask: &ZeroMask,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    adam_stage(
        "stage3",
        ae,
        data,
        config.stage3.learning_rate.unwrap_or(config.adam_lr),
        config.batch_size,
        &config.stage3,
        None,
        Some(mask),
        rng,
    )
}

/// Full path-lasso schedule on the training and validation split of `data`.
pub fn train_three_stage(data: &Dataset, spec: &AutoencoderSpec, config: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
    let td = TrainData::from_dataset(data)?;
    train_path_lasso(&td, spec, config)
}

pub fn train_path_lasso(data: &TrainData, spec: &AutoencoderSpec, config: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
    prune_path_lasso(data, spec, config)?.refit(data, config)
}

/// A model after the pruning stages, before the final refit. The sparsity
/// pattern is fixed at this point, so candidates can be compared by
/// connection count before paying for the refit.
#[derive(Clone, Debug)]
pub struct PrunedAutoencoder {
    pub ae: Autoencoder,
    pub stages: Vec<StageReport>,
    pub penalties: Array2<f64>,
    rng: ChaCha8Rng,
}

impl PrunedAutoencoder {
    pub fn connection_count(&self) -> Result<usize> {
        Ok(self.ae.connection_matrix()?.count_above(0.0))
    }

    /// Final stage: refit with every zero link frozen.
    pub fn refit(mut self, data: &TrainData, config: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
        let mask = ZeroMask::from_zeros(&self.ae.net);
        self.stages
            .push(refit_stage(&mut self.ae, data, config, &mask, &mut self.rng)?);
        let connections = self.ae.connection_matrix()?;
        let connection_count = connections.count_above(0.0);
        Ok((
            self.ae,
            TrainReport {
                stages: self.stages,
                connections,
                connection_count,
                zero_mask: mask,
                penalties: Some(self.penalties),
            },
        ))
    }
}

/// Every stage up to and including the proximal one.
pub fn prune_path_lasso(data: &TrainData, spec: &AutoencoderSpec, config: &TrainConfig) -> Result<PrunedAutoencoder> {
    config.validate()?;
    spec.validate()?;
    if data.train.ncols() != spec.input_dim() || data.val.ncols() != spec.input_dim() {
        return Err(Error::shape(format!(
            "data has {} columns, autoencoder expects {}",
            data.train.ncols(),
            spec.input_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = spec.build(&mut rng)?;
    let mut stages = vec![plain_stage(&mut ae, data, config, &mut rng)?];
    if config.substitution {
        stages.push(substitution_stage(&mut ae, data, config, &mut rng)?);
    }
    let reference = ae.connection_matrix()?;
    let penalties = adaptive_penalties(&reference, config.lambda, config.gamma);
    stages.push(proximal_stage(&mut ae, data, config, &penalties, &mut rng)?);
    Ok(PrunedAutoencoder {
        ae,
        stages,
        penalties,
        rng,
    })
}
