//! L2-regularized logistic regression on sparse rows, fit by L-BFGS.
//!
//! Objective: `Σ ln(1 + exp(−s_i (x_i·w + b))) + (α/2)‖w‖²` with `s_i = ±1`.
//! The bias is not regularized. Every operation is sign-symmetric, so flipping
//! all labels yields exactly the negated parameters.

use std::collections::VecDeque;

use crate::features::SparseRow;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions<T> {
    pub max_iterations: usize,
    /// Stop once the gradient's Euclidean norm is at or below this.
    pub tolerance: T,
    pub memory: usize,
}

impl<T: Scalar> Default for LbfgsOptions<T> {
    fn default() -> Self {
        LbfgsOptions {
            max_iterations: 1000,
            tolerance: T::lit(1e-6),
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

pub struct LogisticProblem<'a, T> {
    rows: &'a [SparseRow<T>],
    signs: Vec<T>,
    dim: usize,
    alpha: T,
}

/// `ln(1 + e^m)` without overflow.
fn softplus<T: Scalar>(m: T) -> T {
    m.max(T::zero()) + (-m.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

impl<'a, T: Scalar> LogisticProblem<'a, T> {
    pub fn new(rows: &'a [SparseRow<T>], labels: &[bool], dim: usize, alpha: T) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        let signs = labels
            .iter()
            .map(|&y| if y { T::one() } else { -T::one() })
            .collect();
        LogisticProblem {
            rows,
            signs,
            dim,
            alpha,
        }
    }

    /// Objective and gradient at `theta = [w; b]`.
    pub fn evaluate(&self, theta: &[T], grad: &mut [T]) -> T {
        let (w, b) = theta.split_at(self.dim);
        let b = b[0];
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut loss = T::zero();
        let mut grad_b = T::zero();
        for (row, &s) in self.rows.iter().zip(&self.signs) {
            let z = row.dot_dense(w) + b;
            let margin = -s * z;
            loss += softplus(margin);
            let coef = -s * sigmoid(margin);
            for (&i, &v) in row.indices.iter().zip(&row.values) {
                grad[i] += coef * v;
            }
            grad_b += coef;
        }
        let half = T::lit(0.5);
        let mut penalty = T::zero();
        for (g, &wi) in grad[..self.dim].iter_mut().zip(w) {
            *g += self.alpha * wi;
            penalty += wi * wi;
        }
        grad[self.dim] = grad_b;
        loss + half * self.alpha * penalty
    }

    pub fn fit(&self, options: &LbfgsOptions<T>) -> LogisticFit<T> {
        self.fit_traced(options).0
    }

    /// Fit plus the objective value after every accepted step.
    pub fn fit_traced(&self, options: &LbfgsOptions<T>) -> (LogisticFit<T>, Vec<T>) {
        let n = self.dim + 1;
        let mut theta = vec![T::zero(); n];
        let mut grad = vec![T::zero(); n];
        let mut f = self.evaluate(&theta, &mut grad);
        let mut trace = vec![f];
        let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(options.memory);
        let mut iterations = 0;
        let mut grad_norm = crate::scalar::norm2(&grad);
        let slack = T::epsilon() * T::lit(16.0);

        let mut trial = vec![T::zero(); n];
        let mut trial_grad = vec![T::zero(); n];
        while grad_norm > options.tolerance && iterations < options.max_iterations {
            let direction = two_loop(&grad, &history);
            let mut slope = dot(&grad, &direction);
            let direction = if slope < T::zero() {
                direction
            } else {
                // not a descent direction: restart from steepest descent
                history.clear();
                slope = -dot(&grad, &grad);
                grad.iter().map(|&g| -g).collect()
            };
            let mut step = if history.is_empty() {
                T::one().min(T::one() / grad_norm)
            } else {
                T::one()
            };

            let mut accepted = false;
            let mut trial_f = f;
            for _ in 0..60 {
                for ((t, &x), &d) in trial.iter_mut().zip(&theta).zip(&direction) {
                    *t = x + step * d;
                }
                trial_f = self.evaluate(&trial, &mut trial_grad);
                let armijo = trial_f <= f + T::lit(1e-4) * step * slope;
                // near the optimum the decrease drowns in rounding; accept a
                // step that keeps f within rounding and shrinks the gradient
                let flat =
                    trial_f <= f + slack * f.abs() && crate::scalar::norm2(&trial_grad) < grad_norm;
                if armijo || flat {
                    accepted = true;
                    break;
                }
                step *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
            iterations += 1;
            debug_assert!(
                trial_f <= f + slack * f.abs(),
                "objective increased: {f} -> {trial_f}"
            );

            let s: Vec<T> = trial.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
            let y: Vec<T> = trial_grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > T::epsilon() * dot(&y, &y) {
                if history.len() == options.memory {
                    history.pop_front();
                }
                history.push_back((s, y, T::one() / sy));
            }
            std::mem::swap(&mut theta, &mut trial);
            std::mem::swap(&mut grad, &mut trial_grad);
            f = trial_f;
            trace.push(f);
            grad_norm = crate::scalar::norm2(&grad);
        }

        let bias = theta[self.dim];
        theta.truncate(self.dim);
        let fit = LogisticFit {
            weights: theta,
            bias,
            objective: f,
            grad_norm,
            iterations,
            converged: grad_norm <= options.tolerance,
        };
        (fit, trace)
    }
}

/// L-BFGS two-loop recursion: returns `−H g`.
fn two_loop<T: Scalar>(grad: &[T], history: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q: Vec<T> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}
