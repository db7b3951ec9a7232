//! Non-negative least-absolute-deviation regression as an exact linear program.
//!
//! `min Σ_i |y_i − β·x_i|` subject to `β ≥ 0` is solved in equality form
//!
//! ```text
//! min Σ (u_i + v_i)   s.t.   x_i·β + u_i − v_i = y_i,   β, u, v ≥ 0
//! ```
//!
//! with a dense tableau simplex. The residual slacks give a feasible starting
//! basis, so no phase one is needed. On return the dual solution read off the
//! reduced costs certifies optimality: the duality gap is checked against the
//! independently recomputed residual sum.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LadOptions {
    /// Rescale each column to unit max-magnitude before solving. Optimal
    /// predictions are unchanged; only the conditioning differs.
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadSolution<T> {
    pub beta: Vec<T>,
    /// Σ|y − β·x| recomputed from `beta`.
    pub objective: T,
    /// Objective value tracked by the simplex.
    pub lp_objective: T,
    /// Dual objective from the final basis; a lower bound on any feasible objective.
    pub dual_objective: T,
    pub gap: T,
    pub max_dual_infeasibility: T,
    pub pivots: usize,
    /// A nonbasic column with zero reduced cost exists, so other optimal β may exist.
    pub possibly_non_unique: bool,
}

struct Tableau<T> {
    rows: usize,
    cols: usize,
    /// `rows x (cols + 1)`, last column is the right-hand side.
    data: Vec<T>,
    reduced: Vec<T>,
    objective: T,
    basis: Vec<usize>,
}

impl<T: Scalar> Tableau<T> {
    fn at(&self, r: usize, c: usize) -> T {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> T {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let inv = T::one() / self.at(pr, pc);
        for c in 0..width {
            self.data[pr * width + c] *= inv;
        }
        self.data[pr * width + pc] = T::one();
        let pivot_row: Vec<T> = self.data[pr * width..(pr + 1) * width].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let factor = self.data[r * width + pc];
            if factor == T::zero() {
                continue;
            }
            let row = &mut self.data[r * width..(r + 1) * width];
            for (x, &p) in row.iter_mut().zip(&pivot_row) {
                *x -= factor * p;
            }
            row[pc] = T::zero();
        }
        let factor = self.reduced[pc];
        if factor != T::zero() {
            for (d, &p) in self.reduced.iter_mut().zip(&pivot_row[..self.cols]) {
                *d -= factor * p;
            }
            self.reduced[pc] = T::zero();
            // z decreases by reduced cost times step length
            self.objective += factor * pivot_row[self.cols];
        }
        self.basis[pr] = pc;
    }
}

/// Solves the non-negative LAD problem for `features` (one row per
/// observation, equal lengths) and `targets`.
pub fn fit_nonnegative_lad<T: Scalar>(
    features: &[Vec<T>],
    targets: &[T],
    options: LadOptions,
) -> Result<LadSolution<T>> {
    let m = features.len();
    if m == 0 || targets.len() != m {
        return Err(Error::InvalidInput(format!(
            "LAD fit needs matching non-empty rows, got {m} rows and {} targets",
            targets.len()
        )));
    }
    let p = features[0].len();
    if features.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput(
            "LAD feature rows differ in length".into(),
        ));
    }
    if features
        .iter()
        .flatten()
        .chain(targets)
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidInput("LAD inputs must be finite".into()));
    }

    let scales: Vec<T> = (0..p)
        .map(|j| {
            let max = features
                .iter()
                .fold(T::zero(), |acc, r| acc.max(r[j].abs()));
            if options.standardize && max > T::zero() {
                max
            } else {
                T::one()
            }
        })
        .collect();

    // columns: beta 0..p, u p..p+m, v p+m..p+2m
    let cols = p + 2 * m;
    let width = cols + 1;
    let mut data = vec![T::zero(); m * width];
    let mut basis = Vec::with_capacity(m);
    for (i, (row, &y)) in features.iter().zip(targets).enumerate() {
        let sign = if y >= T::zero() { T::one() } else { -T::one() };
        let line = &mut data[i * width..(i + 1) * width];
        for j in 0..p {
            line[j] = sign * row[j] / scales[j];
        }
        line[p + i] = sign;
        line[p + m + i] = -sign;
        line[cols] = sign * y;
        basis.push(if sign > T::zero() { p + i } else { p + m + i });
    }
    // initial basis costs are all one
    let mut reduced = vec![T::zero(); cols];
    for (j, d) in reduced.iter_mut().enumerate() {
        let cost = if j >= p { T::one() } else { T::zero() };
        let column_sum: T = (0..m).map(|r| data[r * width + j]).sum();
        *d = cost - column_sum;
    }
    let objective: T = (0..m).map(|r| data[r * width + cols]).sum();
    let mut tab = Tableau {
        rows: m,
        cols,
        data,
        reduced,
        objective,
        basis,
    };

    let scale = targets.iter().fold(T::one(), |acc, &y| acc.max(y.abs()));
    let eps = T::epsilon() * T::lit(1024.0);
    let max_pivots = 50 * (m + cols) + 1000;
    let mut pivots = 0;
    let mut degenerate_run = 0;
    loop {
        let bland = degenerate_run > 2 * m;
        let mut entering = None;
        let mut best = -eps;
        for (j, &d) in tab.reduced.iter().enumerate() {
            if d < best {
                entering = Some(j);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(pc) = entering else { break };

        let mut leaving: Option<(usize, T)> = None;
        for r in 0..m {
            let a = tab.at(r, pc);
            if a > eps {
                let ratio = tab.rhs(r) / a;
                let better = match leaving {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio || (ratio == lratio && tab.basis[r] < tab.basis[lr])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
        }
        let Some((pr, ratio)) = leaving else {
            return Err(Error::Solver(format!(
                "LAD program reported unbounded at column {pc} after {pivots} pivots"
            )));
        };
        degenerate_run = if ratio > eps { 0 } else { degenerate_run + 1 };
        tab.pivot(pr, pc);
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver(format!(
                "LAD simplex exceeded {max_pivots} pivots (objective {})",
                tab.objective
            )));
        }
    }

    let mut beta = vec![T::zero(); p];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < p {
            beta[b] = tab.rhs(r).max(T::zero()) / scales[b];
        }
    }

    // dual y_i = 1 − d(u_i); the LP reads x/scale so the scaled columns are the ones dual-checked
    let dual: Vec<T> = (0..m).map(|i| T::one() - tab.reduced[p + i]).collect();
    let dual_objective: T = dual.iter().zip(targets).map(|(&y, &t)| y * t).sum();
    let mut infeasibility = T::zero();
    for &y in &dual {
        infeasibility = infeasibility.max(y.abs() - T::one());
    }
    for j in 0..p {
        let col: T = features
            .iter()
            .zip(&dual)
            .map(|(row, &y)| y * row[j] / scales[j])
            .sum();
        infeasibility = infeasibility.max(col);
    }
    let objective: T = features
        .iter()
        .zip(targets)
        .map(|(row, &y)| {
            let pred = row
                .iter()
                .zip(&beta)
                .fold(T::zero(), |acc, (&x, &b)| acc + x * b);
            (y - pred).abs()
        })
        .sum();
    let gap = objective - dual_objective;
    let total_scale = scale * T::from_count(m);
    let gap_tol = T::lit(1e-8).max(T::epsilon() * T::lit(1e4)) * total_scale.max(T::one());
    if gap > gap_tol || infeasibility > T::lit(1e-9).max(T::epsilon() * T::lit(1e4)) {
        return Err(Error::Solver(format!(
            "LAD certificate failed: primal {objective}, dual {dual_objective}, dual infeasibility {infeasibility}, {pivots} pivots"
        )));
    }
    let possibly_non_unique = (0..cols)
        .filter(|j| !tab.basis.contains(j))
        .any(|j| tab.reduced[j].abs() <= eps);

    Ok(LadSolution {
        beta,
        objective,
        lp_objective: tab.objective,
        dual_objective,
        gap,
        max_dual_infeasibility: infeasibility.max(T::zero()),
        pivots,
        possibly_non_unique,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_only_fit() {
        let sol =
            fit_nonnegative_lad(&[vec![0.0f64, 0.0, 1.0]], &[0.3], LadOptions::default()).unwrap();
        assert!((sol.beta[2] - 0.3).abs() < 1e-15);
        assert!(sol.objective.abs() < 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_objective() {
        let x: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![0.5, 0.1], vec![3.0, 0.0]];
        let sol = fit_nonnegative_lad(&x, &[0.0, 0.0, 0.0], LadOptions::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn median_of_constant_model() {
        // LAD with a constant column is the median
        let x: Vec<Vec<f64>> = vec![vec![1.0]; 5];
        let y = [1.0, 2.0, 7.0, 3.0, 100.0];
        let sol = fit_nonnegative_lad(&x, &y, LadOptions::default()).unwrap();
        assert!((sol.beta[0] - 3.0).abs() < 1e-12);
        assert!((sol.objective - (2.0 + 1.0 + 4.0 + 0.0 + 97.0)).abs() < 1e-12);
    }

    #[test]
    fn negative_slope_is_clamped_at_zero() {
        // y falls with x; the best non-negative slope is 0 with the intercept at the median
        let x: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]];
        let y = [2.0, 1.0, 0.0];
        let sol = fit_nonnegative_lad(&x, &y, LadOptions::default()).unwrap();
        assert_eq!(sol.beta[0], 0.0);
        assert!((sol.beta[1] - 1.0).abs() < 1e-12);
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_targets_start_from_the_other_slack() {
        let x: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0]];
        let sol = fit_nonnegative_lad(&x, &[-1.0, -2.0], LadOptions::default()).unwrap();
        assert_eq!(sol.beta, vec![0.0]);
        assert!((sol.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn standardization_keeps_predictions() {
        let x: Vec<Vec<f64>> = vec![
            vec![100.0, 0.01, 1.0],
            vec![250.0, 0.03, 1.0],
            vec![80.0, 0.02, 1.0],
            vec![300.0, 0.05, 1.0],
        ];
        let y = [1.2, 2.9, 1.1, 3.4];
        let plain = fit_nonnegative_lad(&x, &y, LadOptions::default()).unwrap();
        let scaled = fit_nonnegative_lad(&x, &y, LadOptions { standardize: true }).unwrap();
        assert!((plain.objective - scaled.objective).abs() < 1e-9);
    }

    #[test]
    fn single_precision_solve() {
        let x = vec![vec![1.0f32, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]];
        let y = [2.0f32, 3.0, 4.0];
        let sol = fit_nonnegative_lad(&x, &y, LadOptions::default()).unwrap();
        assert!(sol.objective < 1e-4);
    }

    #[test]
    fn rejects_ragged_input() {
        let x: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(fit_nonnegative_lad(&x, &[1.0, 2.0], LadOptions::default()).is_err());
    }
}
