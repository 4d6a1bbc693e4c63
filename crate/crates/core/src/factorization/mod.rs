//! Seed-bounded non-negative matrix factorization.
//!
//! Given a non-negative target `V` and non-negative seeds `S_1, ..., S_n`
//! (in product order, so `V ~ F_1 F_2 ... F_n`), find factors with
//! `0 <= F_k <= S_k` element-wise minimizing
//!
//! ```text
//! 1/2 ||V - F_1 ... F_n||_F^2 + l1 * sum(F) + l2/2 * sum(F^2)
//! ```
//!
//! by cyclic coordinate descent. Each entry moves by the exact minimizer of
//! its one-dimensional quadratic and is then clamped into `[0, seed]`, so the
//! objective never increases. When a factor is updated the others are
//! collapsed into at most a left and a right product, so only two update
//! rules are needed: one for an outer factor (`V ~ F H`) and one for a middle
//! factor (`V ~ W F H`).

mod block;
mod boolean;

pub use block::{block_components, block_solve, BlockComponent, BlockSplits};
pub use boolean::{
    boolean_product, boolean_threshold, nonzero_pattern, sever_unwanted_paths, threshold_grid,
    ThresholdOutcome,
};

use ndarray::{Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::{abs_product, ConnectionMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationProblem {
    pub target: Array2<f64>,
    /// Upper bounds and starting point, in product order.
    pub seeds: Vec<Array2<f64>>,
    pub l1: f64,
    pub l2: f64,
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the objective by less than this fraction.
    pub tolerance: f64,
}

impl FactorizationProblem {
    /// Problem with no element-wise penalties, 200 sweeps and tolerance 1e-6.
    pub fn new(target: Array2<f64>, seeds: Vec<Array2<f64>>) -> Self {
        FactorizationProblem {
            target,
            seeds,
            l1: 0.0,
            l2: 0.0,
            max_sweeps: 200,
            tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::shape("factorization needs at least one seed"));
        }
        for (k, s) in self.seeds.iter().enumerate() {
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::numeric(format!("seed {k} has negative or non-finite entries")));
            }
        }
        for (k, pair) in self.seeds.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::shape(format!(
                    "seed {k} is {:?} but seed {} is {:?}",
                    pair[0].dim(),
                    k + 1,
                    pair[1].dim()
                )));
            }
        }
        let shape = (self.seeds[0].nrows(), self.seeds.last().unwrap().ncols());
        if self.target.dim() != shape {
            return Err(Error::shape(format!(
                "target is {:?}, seed product is {:?}",
                self.target.dim(),
                shape
            )));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("target has non-finite entries"));
        }
        if !(self.l1 >= 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::config("l1 and l2 must be non-negative"));
        }
        if self.max_sweeps == 0 || !(self.tolerance > 0.0) {
            return Err(Error::config("need max_sweeps > 0 and tolerance > 0"));
        }
        Ok(())
    }

    pub fn objective(&self, factors: &[Array2<f64>]) -> f64 {
        objective(&self.target, factors, self.l1, self.l2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationResult {
    pub factors: Vec<Array2<f64>>,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl FactorizationResult {
    pub fn product(&self) -> Array2<f64> {
        product(&self.factors)
    }
}

/// Left-to-right product `F_1 F_2 ... F_n`.
pub(crate) fn product(factors: &[Array2<f64>]) -> Array2<f64> {
    let mut iter = factors.iter();
    let first = iter.next().expect("non-empty factor list").clone();
    iter.fold(first, |acc, f| acc.dot(f))
}

pub fn objective(target: &Array2<f64>, factors: &[Array2<f64>], l1: f64, l2: f64) -> f64 {
    let p = product(factors);
    let fit = Zip::from(target)
        .and(&p)
        .fold(0.0, |acc, &v, &q| acc + (v - q) * (v - q));
    let (sum, sum_sq) = factors
        .iter()
        .flatten()
        .fold((0.0, 0.0), |(s, s2), &f| (s + f, s2 + f * f));
    0.5 * fit + l1 * sum + 0.5 * l2 * sum_sq
}

/// Target of one proximal path step:
/// `(|W_L| ... |W_1|) * max(1 - threshold / conn, 0)` element-wise.
///
/// `weights` are in network order; `thresholds` hold `alpha * lambda` per
/// connection and may be `+inf`. Entries where `conn` is zero are zero.
pub fn penalized_path_matrix(
    weights: &[Array2<f64>],
    conn: &ConnectionMatrix,
    thresholds: &Array2<f64>,
) -> Result<Array2<f64>> {
    let paths = abs_product(weights)?;
    if paths.dim() != conn.dim() || thresholds.dim() != conn.dim() {
        return Err(Error::shape(format!(
            "path product {:?}, connection matrix {:?}, thresholds {:?}",
            paths.dim(),
            conn.dim(),
            thresholds.dim()
        )));
    }
    if thresholds.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::config("thresholds must be non-negative"));
    }
    Ok(Zip::from(&paths)
        .and(conn.values())
        .and(thresholds)
        .map_collect(|&p, &c, &t| {
            if c > 0.0 {
                p * (1.0 - t / c).max(0.0)
            } else {
                0.0
            }
        }))
}

/// One coordinate-descent pass over an outer factor `F` in `V ~ F H`.
///
/// Entries whose curvature `(H H^T)_rr + l2` vanishes are left untouched.
pub fn update_outer(
    factor: &mut Array2<f64>,
    right: &Array2<f64>,
    target: &Array2<f64>,
    l1: f64,
    l2: f64,
    seed: &Array2<f64>,
) -> Result<()> {
    if factor.ncols() != right.nrows()
        || target.dim() != (factor.nrows(), right.ncols())
        || seed.dim() != factor.dim()
    {
        return Err(Error::shape(format!(
            "outer update: factor {:?}, right {:?}, target {:?}, seed {:?}",
            factor.dim(),
            right.dim(),
            target.dim(),
            seed.dim()
        )));
    }
    let hht = right.dot(&right.t());
    let vht = target.dot(&right.t());
    for i in 0..factor.nrows() {
        for r in 0..factor.ncols() {
            let curvature = hht[[r, r]] + l2;
            if curvature <= 0.0 {
                continue;
            }
            let fitted = factor.row(i).dot(&hht.column(r));
            let slope = fitted - vht[[i, r]] + l1 + l2 * factor[[i, r]];
            let moved = factor[[i, r]] - slope / curvature;
            if !moved.is_finite() {
                return Err(Error::numeric(format!("outer update produced {moved} at ({i}, {r})")));
            }
            factor[[i, r]] = moved.max(0.0).min(seed[[i, r]]);
        }
    }
    Ok(())
}

/// One coordinate-descent pass over a middle factor `M` in `V ~ W M H`.
pub fn update_middle(
    factor: &mut Array2<f64>,
    left: &Array2<f64>,
    right: &Array2<f64>,
    target: &Array2<f64>,
    l1: f64,
    l2: f64,
    seed: &Array2<f64>,
) -> Result<()> {
    if left.ncols() != factor.nrows()
        || factor.ncols() != right.nrows()
        || target.dim() != (left.nrows(), right.ncols())
        || seed.dim() != factor.dim()
    {
        return Err(Error::shape(format!(
            "middle update: left {:?}, factor {:?}, right {:?}, target {:?}, seed {:?}",
            left.dim(),
            factor.dim(),
            right.dim(),
            target.dim(),
            seed.dim()
        )));
    }
    let wtw = left.t().dot(left);
    let hht = right.dot(&right.t());
    let wtvht = left.t().dot(target).dot(&right.t());
    // running W^T W M H H^T, patched after every accepted move
    let mut fitted = wtw.dot(&*factor).dot(&hht);
    for p in 0..factor.nrows() {
        for r in 0..factor.ncols() {
            let curvature = wtw[[p, p]] * hht[[r, r]] + l2;
            if curvature <= 0.0 {
                continue;
            }
            let current = factor[[p, r]];
            let slope = fitted[[p, r]] - wtvht[[p, r]] + l1 + l2 * current;
            let moved = current - slope / curvature;
            if !moved.is_finite() {
                return Err(Error::numeric(format!("middle update produced {moved} at ({p}, {r})")));
            }
            let next = moved.max(0.0).min(seed[[p, r]]);
            let delta = next - current;
            if delta != 0.0 {
                factor[[p, r]] = next;
                let col = wtw.column(p);
                let row = hht.row(r);
                Zip::indexed(&mut fitted).for_each(|(a, b), f| *f += delta * col[a] * row[b]);
            }
        }
    }
    Ok(())
}

/// Updates factor `k` of `factors` in place, collapsing its neighbours.
fn update_factor(factors: &mut [Array2<f64>], k: usize, problem: &FactorizationProblem) -> Result<()> {
    let n = factors.len();
    let left = (k > 0).then(|| product(&factors[..k]));
    let right = (k + 1 < n).then(|| product(&factors[k + 1..]));
    let (l1, l2) = (problem.l1, problem.l2);
    let seed = &problem.seeds[k];
    let factor = &mut factors[k];
    match (left, right) {
        (None, None) => {
            let eye = Array2::eye(factor.ncols());
            update_outer(factor, &eye, &problem.target, l1, l2, seed)
        }
        (None, Some(right)) => update_outer(factor, &right, &problem.target, l1, l2, seed),
        (Some(left), None) => {
            // V ~ W F  <=>  V^T ~ F^T W^T
            let mut ft = factor.t().to_owned();
            update_outer(
                &mut ft,
                &left.t().to_owned(),
                &problem.target.t().to_owned(),
                l1,
                l2,
                &seed.t().to_owned(),
            )?;
            factor.assign(&ft.t());
            Ok(())
        }
        (Some(left), Some(right)) => update_middle(factor, &left, &right, &problem.target, l1, l2, seed),
    }
}

/// Rescales every inner node, multiplying its incoming links by `c` and its
/// outgoing links by `1 / c`, so that both sides keep the same relative room
/// below their seeds. The product is unchanged; links pinned at their bound
/// on one side get room to move again.
fn rebalance(factors: &mut [Array2<f64>], seeds: &[Array2<f64>]) {
    // smallest seed / value over the positive entries of a lane
    let room = |values: ArrayView1<'_, f64>, bounds: ArrayView1<'_, f64>| {
        Zip::from(&values)
            .and(&bounds)
            .fold(f64::INFINITY, |r, &v, &b| if v > 0.0 { r.min(b / v) } else { r })
    };
    for k in 0..factors.len().saturating_sub(1) {
        for h in 0..factors[k].ncols() {
            let left = room(factors[k].column(h), seeds[k].column(h));
            let right = room(factors[k + 1].row(h), seeds[k + 1].row(h));
            if !left.is_finite() || !right.is_finite() {
                continue;
            }
            let c = (left / right).sqrt();
            if (c - 1.0).abs() < 1e-12 {
                continue;
            }
            Zip::from(factors[k].column_mut(h))
                .and(seeds[k].column(h))
                .for_each(|v, &b| *v = (*v * c).min(b));
            Zip::from(factors[k + 1].row_mut(h))
                .and(seeds[k + 1].row(h))
                .for_each(|v, &b| *v = (*v / c).min(b));
        }
    }
}

/// Cyclic coordinate descent starting from the seeds. Without element-wise
/// penalties every sweep starts by rebalancing the inner nodes.
pub fn solve(problem: &FactorizationProblem) -> Result<FactorizationResult> {
    problem.validate()?;
    let mut factors = problem.seeds.clone();
    let mut previous = problem.objective(&factors);
    if previous == 0.0 {
        // the objective is non-negative, so the seeds are already optimal
        return Ok(FactorizationResult {
            factors,
            objective_trace: vec![0.0],
            converged: true,
        });
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let balance = problem.l1 == 0.0 && problem.l2 == 0.0;
    for _ in 0..problem.max_sweeps {
        if balance {
            rebalance(&mut factors, &problem.seeds);
        }
        for k in 0..factors.len() {
            update_factor(&mut factors, k, problem)?;
        }
        let current = problem.objective(&factors);
        if !current.is_finite() {
            return Err(Error::numeric("factorization objective became non-finite"));
        }
        trace.push(current);
        if previous - current <= problem.tolerance * previous {
            converged = true;
            break;
        }
        previous = current;
    }
    Ok(FactorizationResult {
        factors,
        objective_trace: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_nonneg(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn(shape, |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn penalized_path_matrix_without_penalty_is_path_product() {
        let w = vec![array![[1.0, -2.0], [0.5, 3.0]], array![[-1.0, 2.0]]];
        let conn = crate::penalties::connection_matrix(&w).unwrap();
        let p = penalized_path_matrix(&w, &conn, &Array2::zeros((1, 2))).unwrap();
        assert_eq!(p, abs_product(&w).unwrap());
    }

    #[test]
    fn penalized_path_matrix_full_prune() {
        let w = vec![array![[1.0, -2.0], [0.5, 3.0]], array![[-1.0, 2.0]]];
        let conn = crate::penalties::connection_matrix(&w).unwrap();
        let p = penalized_path_matrix(&w, &conn, &conn.values().clone()).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        let inf = Array2::from_elem((1, 2), f64::INFINITY);
        assert!(penalized_path_matrix(&w, &conn, &inf).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn penalized_path_matrix_scalar_chain() {
        let w = vec![array![[2.0]], array![[3.0]]];
        let conn = crate::penalties::connection_matrix(&w).unwrap();
        let p = penalized_path_matrix(&w, &conn, &array![[1.2]]).unwrap();
        assert_abs_diff_eq!(p[[0, 0]], 4.8, epsilon = 1e-12);
    }

    #[test]
    fn outer_update_scalar_solve() {
        let mut f = array![[5.0]];
        update_outer(&mut f, &array![[1.0]], &array![[2.0]], 0.0, 0.0, &array![[5.0]]).unwrap();
        assert_eq!(f[[0, 0]], 2.0);
    }

    #[test]
    fn outer_update_clamps_at_zero_and_seed() {
        let mut f = array![[1.0]];
        update_outer(&mut f, &array![[1.0]], &array![[-3.0]], 0.0, 0.0, &array![[5.0]]).unwrap();
        assert_eq!(f[[0, 0]], 0.0);
        let mut f = array![[1.0]];
        update_outer(&mut f, &array![[1.0]], &array![[9.0]], 0.0, 0.0, &array![[2.0]]).unwrap();
        assert_eq!(f[[0, 0]], 2.0);
    }

    #[test]
    fn outer_update_keeps_stationary_interior_entry() {
        let h = array![[1.0, 2.0], [0.5, 1.0]];
        let mut f = array![[0.3, 0.7]];
        let target = f.dot(&h);
        let before = f.clone();
        update_outer(&mut f, &h, &target, 0.0, 0.0, &array![[1.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(f, before, epsilon = 1e-15);
    }

    #[test]
    fn outer_update_skips_zero_curvature() {
        let mut f = array![[0.4, 0.6]];
        let h = array![[1.0], [0.0]];
        update_outer(&mut f, &h, &array![[2.0]], 0.0, 0.0, &array![[1.0, 1.0]]).unwrap();
        assert_eq!(f[[0, 1]], 0.6);
        assert_eq!(f[[0, 0]], 1.0);
    }

    #[test]
    fn middle_update_scalar_solve() {
        let mut m = array![[2.0]];
        update_middle(&mut m, &array![[3.0]], &array![[1.0]], &array![[4.8]], 0.0, 0.0, &array![[2.0]]).unwrap();
        assert_abs_diff_eq!(m[[0, 0]], 1.6, epsilon = 1e-12);
    }

    #[test]
    fn middle_update_with_identities_matches_outer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = random_nonneg((3, 4), &mut rng);
        let start = random_nonneg((3, 4), &mut rng);
        let seed = start.mapv(|v| v + 0.5);
        let mut via_outer = start.clone();
        update_outer(&mut via_outer, &Array2::eye(4), &target, 0.1, 0.2, &seed).unwrap();
        let mut via_middle = start;
        update_middle(&mut via_middle, &Array2::eye(3), &Array2::eye(4), &target, 0.1, 0.2, &seed).unwrap();
        assert_abs_diff_eq!(via_outer, via_middle, epsilon = 1e-14);
    }

    #[test]
    fn single_coordinate_moves_decrease_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = random_nonneg((3, 4), &mut rng);
            let m = random_nonneg((4, 5), &mut rng);
            let h = random_nonneg((5, 2), &mut rng);
            let target = random_nonneg((3, 2), &mut rng);
            let seed = m.mapv(|v| v * 2.0);
            let before = objective(&target, &[w.clone(), m.clone(), h.clone()], 0.01, 0.02);
            let mut m2 = m.clone();
            update_middle(&mut m2, &w, &h, &target, 0.01, 0.02, &seed).unwrap();
            let after = objective(&target, &[w.clone(), m2.clone(), h.clone()], 0.01, 0.02);
            assert!(after < before, "{after} >= {before}");
            assert!(m2.iter().zip(&seed).all(|(&v, &s)| (0.0..=s).contains(&v)));
        }
    }

    #[test]
    fn seed_product_target_is_already_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seeds = vec![random_nonneg((3, 4), &mut rng), random_nonneg((4, 2), &mut rng)];
        let target = seeds[0].dot(&seeds[1]);
        let result = solve(&FactorizationProblem::new(target, seeds.clone())).unwrap();
        assert_eq!(result.factors, seeds);
        assert_eq!(result.objective_trace, vec![0.0]);
        assert!(result.converged);
    }

    #[test]
    fn scalar_chain_hits_target_within_bounds() {
        let problem = FactorizationProblem::new(array![[4.8]], vec![array![[3.0]], array![[2.0]]]);
        let r = solve(&problem).unwrap();
        let (a, b) = (r.factors[0][[0, 0]], r.factors[1][[0, 0]]);
        assert_abs_diff_eq!(a * b, 4.8, epsilon = 1e-6);
        assert!(a <= 3.0 && b <= 2.0 && a >= 0.0 && b >= 0.0);
    }

    #[test]
    fn zero_target_breaks_every_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seeds = vec![
            random_nonneg((2, 3), &mut rng),
            random_nonneg((3, 4), &mut rng),
            random_nonneg((4, 2), &mut rng),
        ];
        let mut problem = FactorizationProblem::new(Array2::zeros((2, 2)), seeds);
        problem.max_sweeps = 500;
        let r = solve(&problem).unwrap();
        let norm = r.product().mapv(|v| v * v).sum().sqrt();
        assert!(norm < 1e-8, "residual product norm {norm}");
    }

    #[test]
    fn solve_rejects_bad_problems() {
        let p = FactorizationProblem::new(Array2::zeros((2, 2)), vec![Array2::ones((2, 3)), Array2::ones((2, 2))]);
        assert!(matches!(solve(&p), Err(Error::Shape(_))));
        let p = FactorizationProblem::new(Array2::zeros((2, 2)), vec![Array2::ones((2, 3)), Array2::ones((3, 3))]);
        assert!(matches!(solve(&p), Err(Error::Shape(_))));
        let p = FactorizationProblem::new(Array2::zeros((1, 1)), vec![array![[-1.0]]]);
        assert!(matches!(solve(&p), Err(Error::Numeric(_))));
    }

    #[test]
    fn single_factor_is_clipped_target() {
        let seeds = vec![array![[1.0, 2.0], [3.0, 0.5]]];
        let target = array![[0.5, 5.0], [-1.0, 0.25]];
        let r = solve(&FactorizationProblem::new(target, seeds)).unwrap();
        assert_eq!(r.factors[0], array![[0.5, 2.0], [0.0, 0.25]]);
    }
}
