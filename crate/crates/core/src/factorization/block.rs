//! Block decomposition of a factorization problem.
//!
//! Splitting every dimension of the chain `V ~ F_1 ... F_n` into contiguous
//! blocks turns one factorization into independent ones, one per choice of
//! a block in every dimension. The target is divided among the choices of
//! inner blocks by the share of the seed paths that run through them; each
//! factor block then has one solution per sub-problem it takes part in, and
//! those are merged by element-wise maximum so a link is only dropped when
//! every sub-problem drops it. A sub-problem in which a link lies on no path
//! of positive seeds says nothing about it and is left out of the merge.

use ndarray::{s, Array2, Zip};
use rayon::prelude::*;

use super::boolean::{boolean_product, nonzero_pattern};
use super::{product, solve, FactorizationProblem, FactorizationResult};
use crate::error::{Error, Result};

/// Block sizes for each dimension of the chain, in product order:
/// `sizes[0]` splits the rows of the first factor, `sizes[k]` the shared
/// dimension between factors `k - 1` and `k`, and the last entry the
/// columns of the last factor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSplits {
    sizes: Vec<Vec<usize>>,
}

impl BlockSplits {
    pub fn new(sizes: Vec<Vec<usize>>) -> Self {
        BlockSplits { sizes }
    }

    /// Splits each dimension into at most `blocks` near-equal contiguous parts.
    pub fn even(dims: &[usize], blocks: usize) -> Self {
        let sizes = dims
            .iter()
            .map(|&d| {
                let b = blocks.clamp(1, d.max(1));
                (0..b).map(|k| d / b + usize::from(k < d % b)).collect()
            })
            .collect();
        BlockSplits { sizes }
    }

    pub fn sizes(&self) -> &[Vec<usize>] {
        &self.sizes
    }

    /// Number of independent sub-problems.
    pub fn combinations(&self) -> usize {
        self.sizes.iter().map(Vec::len).product()
    }

    fn validate(&self, dims: &[usize]) -> Result<()> {
        if self.sizes.len() != dims.len() {
            return Err(Error::config(format!(
                "{} split lists for a chain with {} dimensions",
                self.sizes.len(),
                dims.len()
            )));
        }
        for (k, (split, &d)) in self.sizes.iter().zip(dims).enumerate() {
            if split.is_empty() || split.contains(&0) || split.iter().sum::<usize>() != d {
                return Err(Error::config(format!(
                    "splits {split:?} do not partition dimension {k} of size {d}"
                )));
            }
        }
        Ok(())
    }

    fn ranges(&self, dim: usize) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.sizes[dim]
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }
}

/// The part of the target carried by paths through one choice of inner blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockComponent {
    /// Block index for each inner dimension.
    pub inner_blocks: Vec<usize>,
    /// Full-size matrix; components over all inner choices sum to the target.
    pub target: Array2<f64>,
}

fn chain_dims(seeds: &[Array2<f64>]) -> Vec<usize> {
    let mut dims: Vec<usize> = seeds.iter().map(|s| s.nrows()).collect();
    dims.push(seeds.last().unwrap().ncols());
    dims
}

fn index_combinations(counts: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = counts.iter().product();
    (0..total)
        .map(|mut k| {
            counts
                .iter()
                .map(|&c| {
                    let i = k % c;
                    k /= c;
                    i
                })
                .collect()
        })
        .collect()
}

/// Splits the target over the inner-block choices in proportion to the seed
/// paths each choice carries. Where the seed product is zero the target
/// cannot be reached and contributes nothing.
pub fn block_components(problem: &FactorizationProblem, splits: &BlockSplits) -> Result<Vec<BlockComponent>> {
    problem.validate()?;
    let dims = chain_dims(&problem.seeds);
    splits.validate(&dims)?;
    let n = problem.seeds.len();
    let full = product(&problem.seeds);
    let ratio = Zip::from(&problem.target)
        .and(&full)
        .map_collect(|&t, &p| if p > 0.0 { t / p } else { 0.0 });

    let inner_ranges: Vec<_> = (1..n).map(|d| splits.ranges(d)).collect();
    let counts: Vec<usize> = inner_ranges.iter().map(Vec::len).collect();
    Ok(index_combinations(&counts)
        .into_iter()
        .map(|inner_blocks| {
            let restricted: Vec<Array2<f64>> = (0..n)
                .map(|k| {
                    let mut m = Array2::zeros(problem.seeds[k].raw_dim());
                    let rows = if k == 0 {
                        0..dims[0]
                    } else {
                        inner_ranges[k - 1][inner_blocks[k - 1]].clone()
                    };
                    let cols = if k + 1 == n {
                        0..dims[n]
                    } else {
                        inner_ranges[k][inner_blocks[k]].clone()
                    };
                    m.slice_mut(s![rows.clone(), cols.clone()])
                        .assign(&problem.seeds[k].slice(s![rows, cols]));
                    m
                })
                .collect();
            let target = product(&restricted) * &ratio;
            BlockComponent { inner_blocks, target }
        })
        .collect())
}

/// Links of factor `k` lying on at least one path of positive seeds.
fn links_on_paths(patterns: &[Array2<bool>], k: usize) -> Array2<bool> {
    let f = &patterns[k];
    let entered: Vec<bool> = if k == 0 {
        vec![true; f.nrows()]
    } else {
        let above = boolean_product(&patterns[..k]);
        above.columns().into_iter().map(|c| c.iter().any(|&b| b)).collect()
    };
    let leaves: Vec<bool> = if k + 1 == patterns.len() {
        vec![true; f.ncols()]
    } else {
        let below = boolean_product(&patterns[k + 1..]);
        below.rows().into_iter().map(|r| r.iter().any(|&b| b)).collect()
    };
    Array2::from_shape_fn(f.dim(), |(a, b)| f[[a, b]] && entered[a] && leaves[b])
}

/// Solves every block sub-problem independently (in parallel) and merges
/// the factor blocks by element-wise maximum over the sub-problems that
/// determine them.
pub fn block_solve(problem: &FactorizationProblem, splits: &BlockSplits) -> Result<FactorizationResult> {
    let components = block_components(problem, splits)?;
    let dims = chain_dims(&problem.seeds);
    let n = problem.seeds.len();
    if splits.combinations() == 1 {
        return solve(problem);
    }
    let ranges: Vec<_> = (0..=n).map(|d| splits.ranges(d)).collect();
    let counts: Vec<usize> = ranges.iter().map(Vec::len).collect();
    let combos = index_combinations(&counts);

    let solved: Vec<(Vec<usize>, FactorizationResult)> = combos
        .into_par_iter()
        .map(|blocks| {
            let inner = &blocks[1..n];
            let component = components
                .iter()
                .find(|c| c.inner_blocks == inner)
                .expect("component for every inner choice");
            let rows = ranges[0][blocks[0]].clone();
            let cols = ranges[n][blocks[n]].clone();
            let sub = FactorizationProblem {
                target: component.target.slice(s![rows, cols]).to_owned(),
                seeds: (0..n)
                    .map(|k| {
                        problem.seeds[k]
                            .slice(s![
                                ranges[k][blocks[k]].clone(),
                                ranges[k + 1][blocks[k + 1]].clone()
                            ])
                            .to_owned()
                    })
                    .collect(),
                ..problem.clone()
            };
            solve(&sub).map(|r| (blocks, r))
        })
        .collect::<Result<_>>()?;

    // A sub-problem only determines the links on its seed paths; links it
    // cannot reach are left out of the merge and keep their seed if no
    // sub-problem reaches them.
    let mut factors: Vec<Array2<f64>> = (0..n).map(|k| Array2::zeros((dims[k], dims[k + 1]))).collect();
    let mut determined: Vec<Array2<bool>> = (0..n).map(|k| Array2::from_elem((dims[k], dims[k + 1]), false)).collect();
    let mut converged = true;
    for (blocks, result) in &solved {
        converged &= result.converged;
        let sub_seeds: Vec<Array2<bool>> = (0..n)
            .map(|k| {
                nonzero_pattern(
                    &problem.seeds[k]
                        .slice(s![ranges[k][blocks[k]].clone(), ranges[k + 1][blocks[k + 1]].clone()])
                        .to_owned(),
                )
            })
            .collect();
        for (k, f) in result.factors.iter().enumerate() {
            let on_path = links_on_paths(&sub_seeds, k);
            let rows = ranges[k][blocks[k]].clone();
            let cols = ranges[k + 1][blocks[k + 1]].clone();
            let mut dst = factors[k].slice_mut(s![rows.clone(), cols.clone()]);
            let mut seen = determined[k].slice_mut(s![rows, cols]);
            Zip::from(&mut dst)
                .and(&mut seen)
                .and(f)
                .and(&on_path)
                .for_each(|d, seen, &v, &reached| {
                    if reached {
                        *d = d.max(v);
                        *seen = true;
                    }
                });
        }
    }
    for ((f, seen), seed) in factors.iter_mut().zip(&determined).zip(&problem.seeds) {
        Zip::from(f).and(seen).and(seed).for_each(|d, &seen, &s| {
            if !seen {
                *d = s;
            }
        });
    }
    let objective = problem.objective(&factors);
    Ok(FactorizationResult {
        factors,
        objective_trace: vec![objective],
        converged,
    })
}
