use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::seqcore::WarpingPathPair;

/// Largest side accepted by [`brute_force_dtw`].
pub const BRUTE_FORCE_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub path: WarpingPathPair,
    pub total_cost: f64,
    /// Accumulated cost, when requested.
    pub cost_matrix: Option<DMatrix<f64>>,
}

fn check_costs(d: &DMatrix<f64>) -> Result<()> {
    if d.is_empty() {
        return Err(invalid("empty cost matrix"));
    }
    if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("cost matrix must be finite and nonnegative"));
    }
    Ok(())
}

/// Sum of `d` along `path`, accumulated from the first cell onward.
pub fn path_cost(d: &DMatrix<f64>, path: &WarpingPathPair) -> f64 {
    path.cells().fold(0.0, |acc, (i, j)| acc + d[(i, j)])
}

/// Minimal-cost monotone path from `(1, 1)` to `(T_x, T_y)` with steps
/// `(0,1)`, `(1,0)`, `(1,1)`.
pub fn dtw(d: &DMatrix<f64>) -> Result<DtwResult> {
    dtw_impl(d, false)
}

/// As [`dtw`], also returning the accumulated cost matrix.
pub fn dtw_with_costs(d: &DMatrix<f64>) -> Result<DtwResult> {
    dtw_impl(d, true)
}

fn dtw_impl(d: &DMatrix<f64>, keep: bool) -> Result<DtwResult> {
    check_costs(d)?;
    let (tx, ty) = d.shape();
    let mut acc = DMatrix::from_element(tx, ty, f64::INFINITY);
    for i in 0..tx {
        for j in 0..ty {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[(i, j)] = best + d[(i, j)];
        }
    }
    // backtrace: diagonal, then x-advance, then y-advance on ties
    let mut cells = vec![(tx - 1, ty - 1)];
    let (mut i, mut j) = (tx - 1, ty - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 { acc[(i - 1, j - 1)] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1, j)] } else { f64::INFINITY };
        let left = if j > 0 { acc[(i, j - 1)] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        cells.push((i, j));
    }
    cells.reverse();
    let path = WarpingPathPair::from_cells(&cells, tx, ty)?;
    let total_cost = acc[(tx - 1, ty - 1)];
    Ok(DtwResult { path, total_cost, cost_matrix: keep.then_some(acc) })
}

/// Exhaustive search over every valid path; exponential, for testing only.
pub fn brute_force_dtw(d: &DMatrix<f64>) -> Result<DtwResult> {
    check_costs(d)?;
    let (tx, ty) = d.shape();
    if tx > BRUTE_FORCE_MAX || ty > BRUTE_FORCE_MAX {
        return Err(invalid(format!("brute force limited to {BRUTE_FORCE_MAX}x{BRUTE_FORCE_MAX}, got {tx}x{ty}")));
    }
    struct Search<'a> {
        d: &'a DMatrix<f64>,
        stack: Vec<(usize, usize)>,
        best: Option<(f64, Vec<(usize, usize)>)>,
    }
    fn walk(s: &mut Search, i: usize, j: usize, cost: f64) {
        let (tx, ty) = s.d.shape();
        if (i, j) == (tx - 1, ty - 1) {
            if s.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                s.best = Some((cost, s.stack.clone()));
            }
            return;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < tx && nj < ty {
                s.stack.push((ni, nj));
                let c = cost + s.d[(ni, nj)];
                walk(s, ni, nj, c);
                s.stack.pop();
            }
        }
    }
    let mut s = Search { d, stack: vec![(0, 0)], best: None };
    walk(&mut s, 0, 0, d[(0, 0)]);
    let (total_cost, cells) = s.best.expect("at least one path exists");
    Ok(DtwResult { path: WarpingPathPair::from_cells(&cells, tx, ty)?, total_cost, cost_matrix: None })
}

/// A shape on which [`dtw`] disagreed with [`brute_force_dtw`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityMismatch {
    pub shape: (usize, usize),
    pub dtw_cost: f64,
    pub brute_force_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub matrices: usize,
    pub mismatches: Vec<OptimalityMismatch>,
}

/// Compares [`dtw`] with [`brute_force_dtw`] on `trials` uniform random cost
/// matrices of every shape up to `max_side × max_side`. Costs must agree
/// exactly.
pub fn optimality_sweep<R: Rng + ?Sized>(trials: usize, max_side: usize, rng: &mut R) -> Result<OptimalityReport> {
    if max_side == 0 || max_side > BRUTE_FORCE_MAX {
        return Err(invalid(format!("max side must lie in 1..={BRUTE_FORCE_MAX}")));
    }
    let mut report = OptimalityReport { matrices: 0, mismatches: Vec::new() };
    for tx in 1..=max_side {
        for ty in 1..=max_side {
            for _ in 0..trials {
                let d = DMatrix::from_fn(tx, ty, |_, _| rng.random::<f64>());
                let (fast, slow) = (dtw(&d)?.total_cost, brute_force_dtw(&d)?.total_cost);
                report.matrices += 1;
                if fast != slow {
                    report.mismatches.push(OptimalityMismatch { shape: (tx, ty), dtw_cost: fast, brute_force_cost: slow });
                }
            }
        }
    }
    Ok(report)
}
