//! Zero-pattern repair for approximate factorizations.

use ndarray::{Array2, Zip};

use super::FactorizationResult;
use crate::error::{Error, Result};

/// Number of candidate thresholds, log-spaced over `[1e-10, 1]`.
pub const GRID_POINTS: usize = 20;

pub fn threshold_grid() -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|k| 10f64.powf(-10.0 + 10.0 * k as f64 / (GRID_POINTS - 1) as f64))
        .collect()
}

pub fn nonzero_pattern(m: &Array2<f64>) -> Array2<bool> {
    m.mapv(|v| v > 0.0)
}

/// Boolean (or-and) product of a chain in product order.
pub fn boolean_product(factors: &[Array2<bool>]) -> Array2<bool> {
    let mut iter = factors.iter();
    let first = iter.next().expect("non-empty chain").clone();
    iter.fold(first, |acc, f| {
        Array2::from_shape_fn((acc.nrows(), f.ncols()), |(i, j)| {
            acc.row(i).iter().zip(f.column(j)).any(|(&a, &b)| a && b)
        })
    })
}

fn mismatch(pattern: &Array2<bool>, reached: &Array2<bool>) -> usize {
    Zip::from(pattern)
        .and(reached)
        .fold(0, |acc, &a, &b| acc + usize::from(a != b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdOutcome {
    pub factors: Vec<Array2<f64>>,
    pub tau: f64,
    pub mismatch: usize,
    /// Mismatch count for every grid threshold.
    pub grid: Vec<(f64, usize)>,
}

/// Picks the grid threshold whose surviving links best reproduce the
/// nonzero pattern of the target (ties go to the smallest threshold) and
/// zeroes every factor entry at or below it.
pub fn boolean_threshold(result: &FactorizationResult, target_pattern: &Array2<bool>) -> Result<ThresholdOutcome> {
    let factors = &result.factors;
    if factors.is_empty() {
        return Err(Error::shape("no factors to threshold"));
    }
    let shape = (factors[0].nrows(), factors.last().unwrap().ncols());
    if target_pattern.dim() != shape {
        return Err(Error::shape(format!(
            "pattern {:?} does not match factor product {:?}",
            target_pattern.dim(),
            shape
        )));
    }
    let grid: Vec<(f64, usize)> = threshold_grid()
        .into_iter()
        .map(|tau| {
            let kept: Vec<Array2<bool>> = factors.iter().map(|f| f.mapv(|v| v > tau)).collect();
            (tau, mismatch(target_pattern, &boolean_product(&kept)))
        })
        .collect();
    let (tau, best) = grid
        .iter()
        .copied()
        .fold(None, |best: Option<(f64, usize)>, (t, m)| match best {
            Some((_, bm)) if bm <= m => best,
            _ => Some((t, m)),
        })
        .unwrap();
    let thresholded = factors
        .iter()
        .map(|f| f.mapv(|v| if v > tau { v } else { 0.0 }))
        .collect();
    Ok(ThresholdOutcome {
        factors: thresholded,
        tau,
        mismatch: best,
        grid,
    })
}

/// Zeroes links until no path connects a pair the pattern marks as absent.
///
/// Each round takes the first unwanted connection still reached and cuts the
/// link on its paths that serves the fewest wanted connections, preferring
/// the smallest value among equals. Returns the number of links cut.
pub fn sever_unwanted_paths(factors: &mut [Array2<f64>], pattern: &Array2<bool>) -> Result<usize> {
    let n = factors.len();
    if n == 0 {
        return Err(Error::shape("no factors to sever"));
    }
    if pattern.dim() != (factors[0].nrows(), factors[n - 1].ncols()) {
        return Err(Error::shape("pattern does not match factor product"));
    }
    let wanted = pattern.mapv(|b| if b { 1.0 } else { 0.0 });
    let mut cut = 0;
    loop {
        let links: Vec<Array2<bool>> = factors.iter().map(nonzero_pattern).collect();
        let reached = boolean_product(&links);
        let Some(((i, j), _)) = Zip::indexed(&reached)
            .and(pattern)
            .fold(None, |found, idx, &r, &p| found.or((r && !p).then_some((idx, ()))))
        else {
            return Ok(cut);
        };

        let mut best: Option<(f64, f64, usize, (usize, usize))> = None;
        for k in 0..n {
            let above = if k == 0 {
                Array2::from_shape_fn((factors[0].nrows(), factors[0].nrows()), |(a, b)| a == b)
            } else {
                boolean_product(&links[..k])
            };
            let below = if k + 1 == n {
                Array2::from_shape_fn((factors[n - 1].ncols(), factors[n - 1].ncols()), |(a, b)| a == b)
            } else {
                boolean_product(&links[k + 1..])
            };
            let above_f = above.mapv(|b| if b { 1.0 } else { 0.0 });
            let below_f = below.mapv(|b| if b { 1.0 } else { 0.0 });
            // served[a, b] = number of wanted pairs whose paths use link (a, b)
            let served = above_f.t().dot(&wanted).dot(&below_f.t());
            for ((a, b), &v) in factors[k].indexed_iter() {
                if v > 0.0 && above[[i, a]] && below[[b, j]] {
                    let key = (served[[a, b]], v, k, (a, b));
                    let better = match &best {
                        None => true,
                        Some((s, bv, _, _)) => key.0 < *s || (key.0 == *s && key.1 < *bv),
                    };
                    if better {
                        best = Some(key);
                    }
                }
            }
        }
        let (_, _, k, idx) = best.expect("a reached connection has a positive link on its paths");
        factors[k][idx] = 0.0;
        cut += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn result(factors: Vec<Array2<f64>>) -> FactorizationResult {
        FactorizationResult {
            factors,
            objective_trace: vec![],
            converged: true,
        }
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = threshold_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-10).abs() < 1e-24);
        assert!((g[19] - 1.0).abs() < 1e-15);
        let ratio = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-9));
    }

    #[test]
    fn exact_factorization_keeps_all_links() {
        let a = array![[0.5, 0.0], [0.0, 0.5]];
        let b = array![[0.5, 0.5], [0.0, 0.5]];
        let pattern = nonzero_pattern(&a.dot(&b));
        let out = boolean_threshold(&result(vec![a.clone(), b.clone()]), &pattern).unwrap();
        assert_eq!(out.mismatch, 0);
        assert!(out.tau < 0.5);
        assert_eq!(out.factors, vec![a, b]);
    }

    #[test]
    fn empty_pattern_zeroes_everything() {
        // leftovers of a factorization driven towards a zero target
        let a = array![[1e-12, 0.0], [0.0, 1e-11]];
        let b = array![[3e-11, 0.0], [1e-12, 2e-11]];
        let pattern = Array2::from_elem((2, 2), false);
        let out = boolean_threshold(&result(vec![a, b]), &pattern).unwrap();
        assert_eq!(out.mismatch, 0);
        assert!(out.factors.iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn small_leftovers_are_thresholded_away() {
        let a = array![[0.9, 1e-7], [0.0, 0.8]];
        let b = array![[0.7, 0.0], [0.0, 0.6]];
        let pattern = array![[true, false], [false, true]];
        let out = boolean_threshold(&result(vec![a, b]), &pattern).unwrap();
        assert_eq!(out.mismatch, 0);
        assert_eq!(out.factors[0][[0, 1]], 0.0);
        assert!(out.tau >= 1e-7);
    }

    #[test]
    fn boolean_product_is_or_of_ands() {
        let a = array![[true, false], [false, false]];
        let b = array![[false, true], [true, true]];
        assert_eq!(boolean_product(&[a, b]), array![[false, true], [false, false]]);
    }

    #[test]
    fn severing_spares_wanted_connections() {
        // hidden 0 feeds outputs 0 and 1; output 1 must lose input 0
        let mut f = vec![array![[1.0, 0.5], [0.3, 0.0]], array![[2.0, 0.0], [0.0, 1.0]]];
        let pattern = array![[true, true], [false, false]];
        let cut = sever_unwanted_paths(&mut f, &pattern).unwrap();
        assert_eq!(cut, 1);
        assert_eq!(f[0][[1, 0]], 0.0);
        let reached = boolean_product(&f.iter().map(nonzero_pattern).collect::<Vec<_>>());
        assert_eq!(reached, pattern);
    }
}
