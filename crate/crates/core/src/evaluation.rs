//! Reconstruction quality metrics.
//!
//! Distance ties count against a reconstruction in [`observation_match`]
//! and are broken by lowest row index in [`label_match`] and [`knn_match`].

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::ConnectionMatrix;

/// Default tolerance above which a connection counts as present.
pub const CONNECTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnMatch {
    pub k: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r2: f64,
    pub obs_match: f64,
    pub label_match: Option<f64>,
    pub knn_match: Option<KnnMatch>,
    pub connections: usize,
}

impl MetricReport {
    /// All metrics for one reconstruction. Label match is reported only when
    /// labels are given and k-NN match only when `k` is.
    pub fn compute(
        original: ArrayView2<'_, f64>,
        reconstructed: ArrayView2<'_, f64>,
        labels: Option<&[i64]>,
        knn_k: Option<usize>,
        connections: usize,
    ) -> Result<Self> {
        Ok(MetricReport {
            r2: r_squared(original, reconstructed)?,
            obs_match: observation_match(original, reconstructed)?,
            label_match: labels
                .map(|l| label_match(original, reconstructed, l))
                .transpose()?,
            knn_match: knn_k
                .map(|k| knn_match(original, reconstructed, k).map(|fraction| KnnMatch { k, fraction }))
                .transpose()?,
            connections,
        })
    }
}

fn check_same_shape(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "original {:?} and reconstruction {:?} differ in shape",
            a.dim(),
            b.dim()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::shape("no observations"));
    }
    Ok(())
}

/// `1 - SSE / SST` with SST around the column means of the originals.
pub fn r_squared(original: ArrayView2<'_, f64>, reconstructed: ArrayView2<'_, f64>) -> Result<f64> {
    check_same_shape(original, reconstructed)?;
    let mean = original.mean_axis(Axis(0)).unwrap();
    let sse = Zip::from(&original)
        .and(&reconstructed)
        .fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y));
    let sst = (&original - &mean).mapv(|v| v * v).sum();
    if sst <= 0.0 {
        return Err(Error::UndefinedMetric("originals have zero total variance".into()));
    }
    Ok(1.0 - sse / sst)
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    Zip::from(&a).and(&b).fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y))
}

/// Squared distances from every reconstruction (row) to every original (column).
fn distance_table(original: ArrayView2<'_, f64>, reconstructed: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = original.nrows();
    let rows: Vec<Vec<f64>> = (0..reconstructed.nrows())
        .into_par_iter()
        .map(|i| {
            let r = reconstructed.row(i);
            (0..n).map(|j| sq_dist(r, original.row(j))).collect()
        })
        .collect();
    Array2::from_shape_vec((reconstructed.nrows(), n), rows.into_iter().flatten().collect())
        .expect("rectangular distance table")
}

/// Fraction of reconstructions strictly closer to their own original than to any other.
pub fn observation_match(original: ArrayView2<'_, f64>, reconstructed: ArrayView2<'_, f64>) -> Result<f64> {
    check_same_shape(original, reconstructed)?;
    let d = distance_table(original, reconstructed);
    let n = d.nrows();
    let hits = d
        .outer_iter()
        .enumerate()
        .filter(|(i, row)| row.iter().enumerate().all(|(j, &v)| j == *i || row[*i] < v))
        .count();
    Ok(hits as f64 / n as f64)
}

fn nearest(row: ArrayView1<'_, f64>) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (j, &v)| if v < bv { (j, v) } else { (bi, bv) })
        .0
}

/// Fraction of reconstructions whose nearest original carries their own label.
pub fn label_match(original: ArrayView2<'_, f64>, reconstructed: ArrayView2<'_, f64>, labels: &[i64]) -> Result<f64> {
    check_same_shape(original, reconstructed)?;
    if labels.len() != original.nrows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), original.nrows())));
    }
    let d = distance_table(original, reconstructed);
    let hits = d
        .outer_iter()
        .enumerate()
        .filter(|(i, row)| labels[nearest(row.view())] == labels[*i])
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Fraction of reconstructions whose own original is among their `k` nearest originals.
pub fn knn_match(original: ArrayView2<'_, f64>, reconstructed: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    check_same_shape(original, reconstructed)?;
    let n = original.nrows();
    if k == 0 || k >= n.max(2) {
        return Err(Error::config(format!("k must satisfy 1 <= k < n = {n}, got {k}")));
    }
    let d = distance_table(original, reconstructed);
    let hits = d
        .outer_iter()
        .enumerate()
        .filter(|(i, row)| {
            // originals ranked ahead of i: closer, or equally close with a lower index
            let own = row[*i];
            let ahead = row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v < own || (v == own && j < *i))
                .count();
            ahead < k
        })
        .count();
    Ok(hits as f64 / n as f64)
}

/// Number of connections stronger than `tol`.
pub fn count_connections(conn: &ConnectionMatrix, tol: f64) -> usize {
    conn.count_above(tol)
}
