//! Comparison methods: PCA, a plain autoencoder, and an autoencoder with a
//! parameter-wise lasso penalty followed by thresholding.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::ConnectionMatrix;
use crate::trainer::{
    adam_stage, refit_stage, Autoencoder, AutoencoderSpec, SmoothPenalty, StageReport, TrainConfig, TrainData,
    ZeroMask,
};

/// Linear projection onto the top principal directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PcaRecord", into = "PcaRecord")]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `d_x x d_z`, orthonormal columns.
    pub loadings: Array2<f64>,
    /// Share of total variance per kept component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PcaRecord {
    mean: Vec<f64>,
    loadings: Vec<Vec<f64>>,
    explained_variance_ratio: Vec<f64>,
}

impl From<PcaModel> for PcaRecord {
    fn from(m: PcaModel) -> Self {
        PcaRecord {
            mean: m.mean.to_vec(),
            loadings: m.loadings.outer_iter().map(|r| r.to_vec()).collect(),
            explained_variance_ratio: m.explained_variance_ratio,
        }
    }
}

impl TryFrom<PcaRecord> for PcaModel {
    type Error = Error;

    fn try_from(r: PcaRecord) -> Result<Self> {
        let d_x = r.mean.len();
        let d_z = r.explained_variance_ratio.len();
        if r.loadings.len() != d_x || r.loadings.iter().any(|row| row.len() != d_z) {
            return Err(Error::shape(format!("loadings must be {d_x} x {d_z}")));
        }
        let flat: Vec<f64> = r.loadings.into_iter().flatten().collect();
        Ok(PcaModel {
            mean: Array1::from(r.mean),
            loadings: Array2::from_shape_vec((d_x, d_z), flat).expect("checked shape"),
            explained_variance_ratio: r.explained_variance_ratio,
        })
    }
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.loadings.ncols()
    }

    fn check(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "data has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        Ok((&x - &self.mean).dot(&self.loadings))
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::shape("latent width does not match the model"));
        }
        Ok(z.dot(&self.loadings.t()) + &self.mean)
    }

    pub fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.inverse_transform(self.transform(x)?.view())
    }
}

/// Top `d_z` eigenvectors of the sample covariance. Equal eigenvalues keep
/// the solver's order; each loading is signed so its first non-negligible
/// entry is positive.
pub fn pca_fit(x: ArrayView2<'_, f64>, d_z: usize) -> Result<PcaModel> {
    let (n, d_x) = x.dim();
    if n < 2 {
        return Err(Error::shape("PCA needs at least two observations"));
    }
    if d_z == 0 || d_z > d_x {
        return Err(Error::config(format!("need 1 <= d_z <= {d_x}, got {d_z}")));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("PCA input must be finite"));
    }
    let mean = x.mean_axis(Axis(0)).unwrap();
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d_x, d_x, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..d_x).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut loadings = Array2::zeros((d_x, d_z));
    let mut ratios = Vec::with_capacity(d_z);
    for (c, &k) in order.iter().take(d_z).enumerate() {
        let v = eig.eigenvectors.column(k);
        let sign = v
            .iter()
            .find(|e| e.abs() > 1e-12)
            .map_or(1.0, |e| e.signum());
        for i in 0..d_x {
            loadings[[i, c]] = sign * v[i];
        }
        ratios.push(if total > 0.0 {
            eig.eigenvalues[k].max(0.0) / total
        } else {
            0.0
        });
    }
    Ok(PcaModel {
        mean,
        loadings,
        explained_variance_ratio: ratios,
    })
}

/// Stage-one training only: Adam on the reconstruction loss.
pub fn plain_ae_train(data: &TrainData, spec: &AutoencoderSpec, config: &TrainConfig) -> Result<(Autoencoder, StageReport)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = spec.build(&mut rng)?;
    let report = adam_stage(
        "plain",
        &mut ae,
        data,
        config.stage1.learning_rate.unwrap_or(config.adam_lr),
        config.batch_size,
        &config.stage1,
        None,
        None,
        &mut rng,
    )?;
    Ok((ae, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoReport {
    pub stages: Vec<StageReport>,
    /// Absolute weights below this were zeroed.
    pub threshold: f64,
    pub links_zeroed: usize,
    pub connections: ConnectionMatrix,
    pub connection_count: usize,
    pub zero_mask: ZeroMask,
}

impl LassoReport {
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.stages.iter_mut().for_each(|s| s.seconds = 0.0);
        r
    }
}

/// Fraction of the largest absolute weight used as the default threshold.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-3;

/// Adam on the loss plus `lambda * sum |w|` over all weights, then every
/// weight with `|w| < threshold` is zeroed (default: 1e-3 of the largest
/// absolute weight) and the rest are refit with the zeros frozen.
/// Nothing is refit when thresholding removes no weight.
pub fn lasso_ae_train(
    data: &TrainData,
    spec: &AutoencoderSpec,
    lambda: f64,
    threshold: Option<f64>,
    config: &TrainConfig,
) -> Result<(Autoencoder, LassoReport)> {
    lasso_ae_threshold(data, spec, lambda, threshold, config)?.refit(data, config)
}

/// A lasso autoencoder after thresholding, before the refit.
#[derive(Clone, Debug)]
pub struct ThresholdedLasso {
    pub ae: Autoencoder,
    pub stages: Vec<StageReport>,
    pub threshold: f64,
    pub links_zeroed: usize,
    rng: ChaCha8Rng,
}

impl ThresholdedLasso {
    pub fn connection_count(&self) -> Result<usize> {
        Ok(self.ae.connection_matrix()?.count_above(0.0))
    }

    pub fn refit(mut self, data: &TrainData, config: &TrainConfig) -> Result<(Autoencoder, LassoReport)> {
        let zero_mask = ZeroMask::from_zeros(self.ae.network());
        if self.links_zeroed > 0 {
            self.stages
                .push(refit_stage(&mut self.ae, data, config, &zero_mask, &mut self.rng)?);
        }
        let connections = self.ae.connection_matrix()?;
        let connection_count = connections.count_above(0.0);
        Ok((
            self.ae,
            LassoReport {
                stages: self.stages,
                threshold: self.threshold,
                links_zeroed: self.links_zeroed,
                connections,
                connection_count,
                zero_mask,
            },
        ))
    }
}

/// The penalized training and thresholding of [`lasso_ae_train`].
pub fn lasso_ae_threshold(
    data: &TrainData,
    spec: &AutoencoderSpec,
    lambda: f64,
    threshold: Option<f64>,
    config: &TrainConfig,
) -> Result<ThresholdedLasso> {
    config.validate()?;
    if !(lambda >= 0.0) || threshold.is_some_and(|t| t.is_nan() || t < 0.0) {
        return Err(Error::config("need lambda >= 0 and threshold >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = spec.build(&mut rng)?;
    let l1 = move |ae: &Autoencoder| -> Result<(f64, Vec<Array2<f64>>)> {
        let weights = ae.network().weights();
        let value = lambda * weights.iter().map(|w| w.mapv(f64::abs).sum()).sum::<f64>();
        let grads = weights.iter().map(|w| w.mapv(|v| lambda * sign0(v))).collect();
        Ok((value, grads))
    };
    let stages = vec![adam_stage(
        "lasso",
        &mut ae,
        data,
        config.stage1.learning_rate.unwrap_or(config.adam_lr),
        config.batch_size,
        &config.stage1,
        (lambda > 0.0).then_some(&l1 as &SmoothPenalty<'_>),
        None,
        &mut rng,
    )?];

    let largest = ae
        .network()
        .weights()
        .iter()
        .flat_map(|w| w.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let threshold = threshold.unwrap_or(DEFAULT_RELATIVE_THRESHOLD * largest);
    let mut links_zeroed = 0;
    let net = ae.network_mut();
    for l in 0..net.n_layers() {
        net.weight_mut(l).iter_mut().for_each(|w| {
            if *w != 0.0 && w.abs() < threshold {
                *w = 0.0;
                links_zeroed += 1;
            }
        });
    }
    Ok(ThresholdedLasso {
        ae,
        stages,
        threshold,
        links_zeroed,
        rng,
    })
}

/// Sign with the subgradient at zero taken as zero.
fn sign0(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}
