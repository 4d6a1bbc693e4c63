//! Lasso-family penalties and the path machinery.
//!
//! Weight lists are given in network order, `[W_1, ..., W_L]`, with `W_l`
//! of shape `d_l x d_(l-1)`. The connection matrix between the first and the
//! last layer is `sqrt(W_L^2 ... W_1^2)` with squares and root taken
//! element-wise; entry `(i_L, i_0)` is the l2 norm over all paths from input
//! node `i_0` to output node `i_L`, a path's value being the product of the
//! absolute values of its links.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-connection penalty meaning "remove this connection at the first proximal step".
pub const PRUNE_IMMEDIATELY: f64 = f64::INFINITY;

/// Upper bound on the number of paths [`enumerate_paths_norm`] will visit.
pub const MAX_ENUMERATED_PATHS: usize = 1_000_000;

/// Soft-thresholding: `sign(theta) * max(|theta| - threshold, 0)`.
pub fn prox_lasso(theta: f64, threshold: f64) -> f64 {
    theta.signum() * (theta.abs() - threshold).max(0.0)
}

/// Group soft-thresholding. A zero-norm group maps to zeros.
pub fn prox_group_lasso(group: ArrayView1<'_, f64>, threshold: f64) -> Array1<f64> {
    let norm = group.dot(&group).sqrt();
    if norm == 0.0 {
        return Array1::zeros(group.len());
    }
    let factor = (1.0 - threshold / norm).max(0.0);
    group.mapv(|v| v * factor)
}

/// Non-negative `d_L x d_0` matrix of connection strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct ConnectionMatrix(Array2<f64>);

impl ConnectionMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::numeric("connection strengths must be finite and non-negative"));
        }
        Ok(ConnectionMatrix(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Number of entries strictly above `tol`.
    pub fn count_above(&self, tol: f64) -> usize {
        self.0.iter().filter(|&&v| v > tol).count()
    }
}

impl TryFrom<Array2<f64>> for ConnectionMatrix {
    type Error = Error;

    fn try_from(values: Array2<f64>) -> Result<Self> {
        ConnectionMatrix::new(values)
    }
}

impl From<ConnectionMatrix> for Array2<f64> {
    fn from(c: ConnectionMatrix) -> Self {
        c.0
    }
}

pub(crate) fn check_chain(weights: &[Array2<f64>]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::shape("empty weight list"));
    }
    for (l, pair) in weights.windows(2).enumerate() {
        if pair[1].ncols() != pair[0].nrows() {
            return Err(Error::shape(format!(
                "W_{} has {} rows but W_{} has {} columns",
                l + 1,
                pair[0].nrows(),
                l + 2,
                pair[1].ncols()
            )));
        }
    }
    Ok(())
}

/// Product of a chain of matrices given in network order: `M_L ... M_1`.
pub(crate) fn chain_product<'a, I>(mats: I) -> Array2<f64>
where
    I: IntoIterator<Item = &'a Array2<f64>>,
{
    let mut iter = mats.into_iter();
    let first = iter.next().expect("non-empty chain").clone();
    iter.fold(first, |acc, m| m.dot(&acc))
}

/// `W_L^2 ... W_1^2` with element-wise squares.
pub fn square_product(weights: &[Array2<f64>]) -> Result<Array2<f64>> {
    check_chain(weights)?;
    let squares: Vec<Array2<f64>> = weights.iter().map(|w| w.mapv(|v| v * v)).collect();
    Ok(chain_product(&squares))
}

/// `|W_L| ... |W_1|`: the sum of path values per connection.
pub fn abs_product(weights: &[Array2<f64>]) -> Result<Array2<f64>> {
    check_chain(weights)?;
    let abs: Vec<Array2<f64>> = weights.iter().map(|w| w.mapv(f64::abs)).collect();
    Ok(chain_product(&abs))
}

pub fn connection_matrix(weights: &[Array2<f64>]) -> Result<ConnectionMatrix> {
    let sq = square_product(weights)?;
    ConnectionMatrix::new(sq.mapv(f64::sqrt))
}

/// Value of the path `i_0, i_1, ..., i_L` (one node index per layer, input first).
pub fn path_value(weights: &[Array2<f64>], path: &[usize]) -> Result<f64> {
    check_chain(weights)?;
    if path.len() != weights.len() + 1 {
        return Err(Error::shape(format!(
            "path visits {} layers, network has {}",
            path.len(),
            weights.len() + 1
        )));
    }
    let mut value = 1.0;
    for (l, w) in weights.iter().enumerate() {
        let (from, to) = (path[l], path[l + 1]);
        if to >= w.nrows() || from >= w.ncols() {
            return Err(Error::shape(format!(
                "link ({to}, {from}) outside W_{} of shape {:?}",
                l + 1,
                w.dim()
            )));
        }
        value *= w[[to, from]].abs();
    }
    Ok(value)
}

/// Brute-force group norm over every path from input `i_0` to output `i_l`.
pub fn enumerate_paths_norm(weights: &[Array2<f64>], i_l: usize, i_0: usize) -> Result<f64> {
    check_chain(weights)?;
    let inner: Vec<usize> = weights[..weights.len() - 1].iter().map(|w| w.nrows()).collect();
    let count = inner
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&c| c <= MAX_ENUMERATED_PATHS)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "inner layer widths {inner:?} give more than {MAX_ENUMERATED_PATHS} paths"
            ))
        })?;
    let last = weights.last().unwrap();
    if i_l >= last.nrows() || i_0 >= weights[0].ncols() {
        return Err(Error::shape(format!("connection ({i_l}, {i_0}) out of range")));
    }

    let mut path = vec![0usize; weights.len() + 1];
    path[0] = i_0;
    path[weights.len()] = i_l;
    let mut sum_sq = 0.0;
    for k in 0..count {
        // mixed-radix decode of k into the inner node indices
        let mut rest = k;
        for (slot, &d) in path[1..weights.len()].iter_mut().zip(&inner) {
            *slot = rest % d;
            rest /= d;
        }
        let p = path_value(weights, &path)?;
        sum_sq += p * p;
    }
    Ok(sum_sq.sqrt())
}

/// Gradient of `<upstream, W_L^2 ... W_1^2>` with respect to every `W_l`.
pub fn square_product_vjp(weights: &[Array2<f64>], upstream: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    check_chain(weights)?;
    let n = weights.len();
    let expected = (weights[n - 1].nrows(), weights[0].ncols());
    if upstream.dim() != expected {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match product shape {:?}",
            upstream.dim(),
            expected
        )));
    }
    let squares: Vec<Array2<f64>> = weights.iter().map(|w| w.mapv(|v| v * v)).collect();

    // below[k] = S_(k-1) ... S_0, above[k] = S_(n-1) ... S_(k+1)
    let mut below = Vec::with_capacity(n);
    below.push(Array2::eye(weights[0].ncols()));
    for k in 1..n {
        below.push(squares[k - 1].dot(&below[k - 1]));
    }
    let mut above = vec![Array2::zeros((0, 0)); n];
    above[n - 1] = Array2::eye(weights[n - 1].nrows());
    for k in (0..n - 1).rev() {
        above[k] = above[k + 1].dot(&squares[k + 1]);
    }

    Ok((0..n)
        .map(|k| {
            let d_square = above[k].t().dot(upstream).dot(&below[k].t());
            Zip::from(&d_square)
                .and(&weights[k])
                .map_collect(|&g, &w| 2.0 * w * g)
        })
        .collect())
}

/// Pulls a gradient on connection strengths back through the element-wise
/// square root. The derivative of `sqrt` at 0 is taken as 0.
pub fn sqrt_backward(conn: &ConnectionMatrix, upstream: &Array2<f64>) -> Array2<f64> {
    Zip::from(conn.values())
        .and(upstream)
        .map_collect(|&c, &g| if c > 0.0 { g / (2.0 * c) } else { 0.0 })
}

/// Gradient of `<upstream, connection_matrix(weights)>` with respect to each weight.
pub fn connection_vjp(weights: &[Array2<f64>], upstream: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    let conn = connection_matrix(weights)?;
    if conn.dim() != upstream.dim() {
        return Err(Error::shape("upstream gradient does not match the connection matrix"));
    }
    square_product_vjp(weights, &sqrt_backward(&conn, upstream))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub gamma: f64,
    /// Adaptive per-connection penalties, `+inf` meaning prune immediately.
    pub per_connection: Option<Array2<f64>>,
    pub exclusive_weight: f64,
}

impl PenaltyConfig {
    /// Uniform penalty `lambda`, `gamma = 2`, exclusive weight `0.1 * lambda`.
    pub fn new(lambda: f64) -> Self {
        PenaltyConfig {
            lambda,
            gamma: 2.0,
            per_connection: None,
            exclusive_weight: 0.1 * lambda,
        }
    }

    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.gamma > 0.0) || !(self.exclusive_weight >= 0.0) {
            return Err(Error::config("need lambda >= 0, gamma > 0 and exclusive_weight >= 0"));
        }
        if let Some(pc) = &self.per_connection {
            if pc.dim() != shape {
                return Err(Error::shape(format!(
                    "per-connection penalties {:?}, connection matrix {:?}",
                    pc.dim(),
                    shape
                )));
            }
            if pc.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(Error::config("per-connection penalties must be non-negative"));
            }
        }
        Ok(())
    }

    /// Penalty of connection `(i, j)`.
    pub fn penalty(&self, i: usize, j: usize) -> f64 {
        self.per_connection
            .as_ref()
            .map_or(self.lambda, |pc| pc[[i, j]])
    }
}

/// `lambda / reference^gamma`, with [`PRUNE_IMMEDIATELY`] where the reference is 0.
pub fn adaptive_penalties(reference: &ConnectionMatrix, lambda: f64, gamma: f64) -> Array2<f64> {
    reference.values().mapv(|r| {
        if r > 0.0 {
            lambda / r.powf(gamma)
        } else {
            PRUNE_IMMEDIATELY
        }
    })
}

/// A partition of the entries of a connection matrix into exclusive-lasso groups.
#[derive(Clone, Debug, PartialEq)]
pub struct ExclusiveGroups {
    shape: (usize, usize),
    groups: Vec<Vec<(usize, usize)>>,
}

impl ExclusiveGroups {
    pub fn new(shape: (usize, usize), groups: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        let mut seen = Array2::<u8>::zeros(shape);
        for &(i, j) in groups.iter().flatten() {
            if i >= shape.0 || j >= shape.1 {
                return Err(Error::config(format!("group entry ({i}, {j}) outside {shape:?}")));
            }
            seen[[i, j]] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::config("exclusive-lasso groups must partition all entries"));
        }
        Ok(ExclusiveGroups { shape, groups })
    }

    /// One group per row.
    pub fn rows(shape: (usize, usize)) -> Self {
        let groups = (0..shape.0)
            .map(|i| (0..shape.1).map(|j| (i, j)).collect())
            .collect();
        ExclusiveGroups { shape, groups }
    }

    /// One group per column.
    pub fn columns(shape: (usize, usize)) -> Self {
        let groups = (0..shape.1)
            .map(|j| (0..shape.0).map(|i| (i, j)).collect())
            .collect();
        ExclusiveGroups { shape, groups }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn groups(&self) -> &[Vec<(usize, usize)>] {
        &self.groups
    }

    fn check(&self, conn: &ConnectionMatrix) -> Result<()> {
        if conn.dim() != self.shape {
            return Err(Error::config(format!(
                "groups cover {:?}, connection matrix is {:?}",
                self.shape,
                conn.dim()
            )));
        }
        Ok(())
    }
}

/// `sum_g (sum_{e in g} |e|)^2`.
pub fn exclusive_lasso(conn: &ConnectionMatrix, groups: &ExclusiveGroups) -> Result<f64> {
    groups.check(conn)?;
    let v = conn.values();
    Ok(groups
        .groups
        .iter()
        .map(|g| {
            let s: f64 = g.iter().map(|&(i, j)| v[[i, j]]).sum();
            s * s
        })
        .sum())
}

/// Gradient of [`exclusive_lasso`] with respect to the connection entries.
pub fn exclusive_lasso_conn_grad(conn: &ConnectionMatrix, groups: &ExclusiveGroups) -> Result<Array2<f64>> {
    groups.check(conn)?;
    let v = conn.values();
    let mut grad = Array2::zeros(conn.dim());
    for g in &groups.groups {
        let s: f64 = g.iter().map(|&(i, j)| v[[i, j]]).sum();
        for &(i, j) in g {
            grad[[i, j]] = 2.0 * s;
        }
    }
    Ok(grad)
}

/// Exclusive-lasso value of `connection_matrix(weights)` and its gradient per weight.
pub fn exclusive_lasso_with_grad(
    weights: &[Array2<f64>],
    groups: &ExclusiveGroups,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let conn = connection_matrix(weights)?;
    let value = exclusive_lasso(&conn, groups)?;
    let upstream = exclusive_lasso_conn_grad(&conn, groups)?;
    let grads = square_product_vjp(weights, &sqrt_backward(&conn, &upstream))?;
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn prox_lasso_examples() {
        assert_eq!(prox_lasso(2.0, 0.5), 1.5);
        assert_eq!(prox_lasso(-0.3, 0.5), 0.0);
        assert_eq!(prox_lasso(0.0, 7.0), 0.0);
        assert_eq!(prox_lasso(-2.0, 0.5), -1.5);
    }

    #[test]
    fn prox_group_lasso_examples() {
        assert_eq!(prox_group_lasso(array![3.0, 4.0].view(), 2.5), array![1.5, 2.0]);
        assert_eq!(prox_group_lasso(array![3.0, 4.0].view(), 5.0), array![0.0, 0.0]);
        assert_eq!(prox_group_lasso(array![0.0, 0.0].view(), 1.0), array![0.0, 0.0]);
    }

    #[test]
    fn path_value_examples() {
        let ones = vec![Array2::ones((2, 2)), Array2::ones((2, 2))];
        assert_eq!(path_value(&ones, &[0, 1, 0]).unwrap(), 1.0);
        let broken = vec![array![[1.0, 0.0], [1.0, 1.0]], Array2::ones((2, 2))];
        assert_eq!(path_value(&broken, &[1, 0, 0]).unwrap(), 0.0);
        let w = vec![array![[2.0]], array![[-3.0]]];
        assert_eq!(path_value(&w, &[0, 0, 0]).unwrap(), 6.0);
        assert!(matches!(path_value(&w, &[0, 1, 0]), Err(Error::Shape(_))));
    }

    #[test]
    fn connection_matrix_of_diagonal_chain() {
        let w = vec![Array2::from_diag(&array![1.0, 2.0]), Array2::from_diag(&array![3.0, 4.0])];
        let c = connection_matrix(&w).unwrap();
        assert_eq!(c.values(), &array![[3.0, 0.0], [0.0, 8.0]]);
        assert_eq!(enumerate_paths_norm(&w, 1, 1).unwrap(), 8.0);
    }

    #[test]
    fn connection_matrix_sums_squared_paths() {
        let w = vec![array![[1.0, 2.0], [3.0, 4.0]], array![[1.0, 1.0], [1.0, 1.0]]];
        let c = connection_matrix(&w).unwrap();
        // paths 0 -> 0 -> 0 and 0 -> 1 -> 0 have values 1 and 3
        assert_abs_diff_eq!(c.values()[[0, 0]], 10f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(enumerate_paths_norm(&w, 0, 0).unwrap(), 10f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn zero_layer_disconnects_everything() {
        let w = vec![array![[1.0, 2.0], [3.0, 4.0]], Array2::zeros((3, 2))];
        let c = connection_matrix(&w).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        assert_eq!(c.count_above(0.0), 0);
    }

    #[test]
    fn zero_input_column_gives_zero_norm() {
        let w = vec![array![[0.0, 2.0], [0.0, 4.0]], array![[1.0, 1.0]]];
        assert_eq!(enumerate_paths_norm(&w, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn non_conformable_chain_is_rejected() {
        let w = vec![Array2::ones((3, 2)), Array2::ones((2, 2))];
        assert!(matches!(connection_matrix(&w), Err(Error::Shape(_))));
    }

    #[test]
    fn enumeration_respects_capacity() {
        let w = vec![
            Array2::ones((1000, 1)),
            Array2::ones((1001, 1000)),
            Array2::ones((1, 1001)),
        ];
        assert!(matches!(enumerate_paths_norm(&w, 0, 0), Err(Error::Capacity(_))));
    }

    #[test]
    fn adaptive_penalty_examples() {
        let reference = ConnectionMatrix::new(array![[2.0, 1.0, 0.0]]).unwrap();
        let p = adaptive_penalties(&reference, 1.0, 2.0);
        assert_eq!(p[[0, 0]], 0.25);
        assert_eq!(p[[0, 1]], 1.0);
        assert_eq!(p[[0, 2]], PRUNE_IMMEDIATELY);
        assert_eq!(adaptive_penalties(&reference, 3.5, 2.0)[[0, 1]], 3.5);
    }

    #[test]
    fn exclusive_lasso_examples() {
        let id = ConnectionMatrix::new(Array2::eye(2)).unwrap();
        assert_eq!(exclusive_lasso(&id, &ExclusiveGroups::columns((2, 2))).unwrap(), 2.0);
        let c = ConnectionMatrix::new(array![[1.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(exclusive_lasso(&c, &ExclusiveGroups::rows((2, 2))).unwrap(), 4.0);
    }

    #[test]
    fn exclusive_groups_must_partition() {
        assert!(ExclusiveGroups::new((2, 2), vec![vec![(0, 0), (0, 1)], vec![(1, 0)]]).is_err());
        assert!(ExclusiveGroups::new((2, 2), vec![vec![(0, 0), (0, 1), (1, 0)], vec![(1, 1), (0, 0)]]).is_err());
        assert!(ExclusiveGroups::new((1, 2), vec![vec![(0, 0)], vec![(0, 1)]]).is_ok());
        let c = ConnectionMatrix::new(Array2::eye(3)).unwrap();
        assert!(matches!(
            exclusive_lasso(&c, &ExclusiveGroups::rows((2, 2))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn penalty_config_validation() {
        let mut cfg = PenaltyConfig::new(0.5);
        assert_eq!(cfg.exclusive_weight, 0.05);
        cfg.per_connection = Some(array![[1.0, PRUNE_IMMEDIATELY]]);
        assert!(cfg.validate((1, 2)).is_ok());
        assert!(cfg.validate((2, 1)).is_err());
        assert_eq!(cfg.penalty(0, 1), f64::INFINITY);
        cfg.gamma = 0.0;
        assert!(cfg.validate((1, 2)).is_err());
    }
}
