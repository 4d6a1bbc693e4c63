//! Datasets: synthetic hypercube clusters, splitting, standardization and CSV.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with a `u64`; normal
//! draws use the ziggurat sampler of `rand_distr::StandardNormal`. Both are
//! platform independent, so a seed fully determines the generated data.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train/validation/test row indices covering the dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub const DEFAULT_TEST_FRAC: f64 = 0.2;
    pub const DEFAULT_VAL_FRAC: f64 = 0.1;

    /// Shuffles `0..n` with `seed`, sets aside `round(test_frac * n)` rows for
    /// testing and `round(val_frac * rest)` of the remainder for validation.
    pub fn random(n: usize, test_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        let valid = |f: f64| f > 0.0 && f < 1.0;
        if !valid(test_frac) || !valid(val_frac) || test_frac + val_frac >= 1.0 {
            return Err(Error::config(format!(
                "split fractions must lie in (0, 1) and sum below 1, got {test_frac} and {val_frac}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_frac * n as f64).round() as usize;
        let rest = n - n_test;
        let n_val = (val_frac * rest as f64).round() as usize;
        let n_train = rest - n_val;
        if n_test == 0 || n_val == 0 || n_train == 0 {
            return Err(Error::config(format!(
                "split of {n} rows leaves an empty part ({n_train} train, {n_val} val, {n_test} test)"
            )));
        }
        let test = order[..n_test].to_vec();
        let val = order[n_test..n_test + n_val].to_vec();
        let train = order[n_test + n_val..].to_vec();
        Ok(Split { train, val, test })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-column affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardization {
    /// Fits on the rows of `x`; constant columns get scale 1.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::config("standardization needs at least two rows"));
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let scale = x
            .std_axis(Axis(0), 1.0)
            .mapv(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
        Ok(Standardization { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }

    pub fn inverse(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        &z * &self.scale + &self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub labels: Option<Vec<i64>>,
    pub split: Option<Split>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.nrows() {
                return Err(Error::shape(format!("{} labels for {} rows", l.len(), x.nrows())));
            }
        }
        Ok(Dataset {
            x,
            labels,
            split: None,
            standardization: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_split(mut self, test_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        self.split = Some(Split::random(self.n_rows(), test_frac, val_frac, seed)?);
        Ok(self)
    }

    /// Fits the standardization on the training rows (all rows when unsplit).
    pub fn with_standardization(mut self) -> Result<Self> {
        let fit_rows = match &self.split {
            Some(s) => self.x.select(Axis(0), &s.train),
            None => self.x.clone(),
        };
        self.standardization = Some(Standardization::fit(fit_rows.view())?);
        Ok(self)
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.x.select(Axis(0), idx)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Option<Vec<i64>> {
        self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect())
    }

    /// Rows mapped through the standardization, if any.
    pub fn model_rows(&self, idx: &[usize]) -> Array2<f64> {
        let raw = self.rows(idx);
        match &self.standardization {
            Some(s) => s.transform(raw.view()),
            None => raw,
        }
    }

    pub fn split(&self) -> Result<&Split> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::config("dataset has not been split"))
    }
}

/// `2^dims` spherical Gaussian clusters centred on the vertices of `{0, 1}^dims`.
///
/// Every point gets a cluster draw with standard deviation `cluster_std` and
/// an independent noise draw with standard deviation `noise_std`; both draws
/// are always made, so datasets differing only in the noise level share
/// their cluster draws. Column `k` of vertex `v` is bit `dims - 1 - k` of
/// `v`, and the label of a point is `v`.
pub fn generate_hypercube(
    dims: usize,
    points_per_cluster: usize,
    cluster_std: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if dims == 0 || dims > 20 {
        return Err(Error::config(format!("hypercube dimension must be in 1..=20, got {dims}")));
    }
    if !(cluster_std >= 0.0) || !(noise_std >= 0.0) {
        return Err(Error::config("standard deviations must be non-negative"));
    }
    let clusters = 1usize << dims;
    let n = clusters * points_per_cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for v in 0..clusters {
        for p in 0..points_per_cluster {
            let row = v * points_per_cluster + p;
            for k in 0..dims {
                let vertex = ((v >> (dims - 1 - k)) & 1) as f64;
                let spread: f64 = rng.sample(StandardNormal);
                let noise: f64 = rng.sample(StandardNormal);
                x[[row, k]] = vertex + cluster_std * spread + noise_std * noise;
            }
            labels.push(v as i64);
        }
    }
    Dataset::new(x, Some(labels))
}

/// Reads a comma-separated numeric matrix, optionally skipping one header
/// row and taking the last column as integer labels.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool, skip_header: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, has_labels, skip_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_labels: bool, skip_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    let mut n_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Input(e.to_string()))?;
        let line = record.position().map_or(n_rows + 1, |p| p.line() as usize);
        if width.is_some_and(|w| w != record.len()) {
            return Err(Error::Input(format!(
                "line {line} has {} fields, expected {}",
                record.len(),
                width.unwrap()
            )));
        }
        width = Some(record.len());
        let n_features = if has_labels { record.len().saturating_sub(1) } else { record.len() };
        if n_features == 0 {
            return Err(Error::Input(format!("line {line} has no feature columns")));
        }
        for (c, field) in record.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                row: line,
                column: c + 1,
                message,
            };
            if c < n_features {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(format!("'{field}' is not a number")))?;
                values.push(v);
            } else {
                let l: i64 = field
                    .parse()
                    .map_err(|_| parse_err(format!("'{field}' is not an integer label")))?;
                labels.push(l);
            }
        }
        n_rows += 1;
    }
    let Some(width) = width else {
        return Err(Error::Input("file contains no data rows".into()));
    };
    let n_features = if has_labels { width - 1 } else { width };
    let x = Array2::from_shape_vec((n_rows, n_features), values).map_err(|e| Error::shape(e.to_string()))?;
    Dataset::new(x, has_labels.then_some(labels))
}

/// Writes rows with shortest round-trip float formatting, labels last.
pub fn save_csv(path: impl AsRef<Path>, x: ArrayView2<'_, f64>, labels: Option<&[i64]>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write_csv(&mut out, x, labels)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(out: &mut W, x: ArrayView2<'_, f64>, labels: Option<&[i64]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.nrows() {
            return Err(Error::shape(format!("{} labels for {} rows", l.len(), x.nrows())));
        }
    }
    for (i, row) in x.outer_iter().enumerate() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{v}")?;
        }
        if let Some(l) = labels {
            write!(out, ",{}", l[i])?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
