//! Two-variable working-set solver for the SVM dual
//!
//! ```text
//! maximize   α'1 − ½ α'YKYα
//! subject to 0 ⪯ α ⪯ c·1,  α'y = 0
//! ```
//!
//! Working pairs are the maximal KKT violators. Internally the solver
//! minimises `f(α) = ½ α'Qα − 1'α` with `Q = YKY`, as in LIBSVM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_UPDATES: usize = 1_000_000;

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DualSolution<S: Real> {
    pub alpha: Vec<S>,
    pub b: S,
    pub objective: S,
    /// `max_{I_up} −y∇f − min_{I_low} −y∇f` at exit (clamped at 0).
    pub kkt_violation: S,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_updates: DEFAULT_MAX_UPDATES }
    }
}

/// `α'1 − ½ α'YKYα`.
pub fn dual_objective<S: Real>(k: &SquareMatrix<S>, y: &[i8], alpha: &[S]) -> S {
    let ya: Vec<S> = alpha.iter().zip(y).map(|(&a, &yi)| signed(a, yi)).collect();
    let lin: S = alpha.iter().copied().sum();
    lin - S::lit(0.5) * k.quad_form(&ya)
}

/// `α'YKYα`, the squared RKHS norm of `Σ_i α_i y_i φ(x_i)`.
pub fn weight_norm_sq<S: Real>(k: &SquareMatrix<S>, y: &[i8], alpha: &[S]) -> S {
    let ya: Vec<S> = alpha.iter().zip(y).map(|(&a, &yi)| signed(a, yi)).collect();
    k.quad_form(&ya).max(S::zero())
}

/// Decision values without offset: `g_i = Σ_j α_j y_j K_ij`.
pub fn expansion<S: Real>(k: &SquareMatrix<S>, y: &[i8], alpha: &[S]) -> Vec<S> {
    let ya: Vec<S> = alpha.iter().zip(y).map(|(&a, &yi)| signed(a, yi)).collect();
    k.mul_vec(&ya)
}

#[inline]
fn signed<S: Real>(v: S, y: i8) -> S {
    if y > 0 {
        v
    } else {
        -v
    }
}

/// Solves the dual from `α = 0`.
pub fn solve_svm_dual<S: Real>(k: &SquareMatrix<S>, y: &[i8], c: S, opts: &SolverOptions) -> Result<DualSolution<S>> {
    solve_svm_dual_warm(k, y, c, opts, None)
}

/// Solves the dual starting from `warm` when it is feasible for this box;
/// infeasible warm starts are ignored.
pub fn solve_svm_dual_warm<S: Real>(
    k: &SquareMatrix<S>,
    y: &[i8],
    c: S,
    opts: &SolverOptions,
    warm: Option<&[S]>,
) -> Result<DualSolution<S>> {
    let n = y.len();
    if k.dim() != n {
        return Err(Error::InvalidParameter(format!("Gram is {}×{} but {} labels given", k.dim(), k.dim(), n)));
    }
    if !(c > S::zero()) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("box bound must be positive, got {c}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if !(y.iter().any(|&v| v > 0) && y.iter().any(|&v| v < 0)) {
        return Err(Error::DegenerateTask);
    }

    let tol = S::lit(opts.tol);
    let tau = S::lit(TAU);
    let zero = S::zero();
    let ys: Vec<S> = y.iter().map(|&v| if v > 0 { S::one() } else { -S::one() }).collect();
    let q = |i: usize, j: usize| ys[i] * ys[j] * k.get(i, j);
    // curvature smaller than this is negative beyond rounding
    let neg_curv = -S::lit(1e-8) * (k.trace() / S::from_usize_lossy(n)).abs().max(S::one());

    let mut alpha = match warm {
        Some(w) if is_feasible(w, &ys, c) => w.to_vec(),
        _ => vec![zero; n],
    };
    // gradient of f: G = Qα − 1
    let mut grad = vec![-S::one(); n];
    for j in 0..n {
        if alpha[j] != zero {
            for (i, g) in grad.iter_mut().enumerate() {
                *g = *g + q(i, j) * alpha[j];
            }
        }
    }

    let in_up = |a: S, yi: S| (yi > zero && a < c) || (yi < zero && a > zero);
    let in_low = |a: S, yi: S| (yi > zero && a > zero) || (yi < zero && a < c);

    let mut iterations = 0;
    let mut gap;
    let mut converged = false;
    loop {
        let mut i_best = None;
        let mut m_up = S::neg_infinity();
        let mut j_best = None;
        let mut m_low = S::infinity();
        for t in 0..n {
            let v = -ys[t] * grad[t];
            if in_up(alpha[t], ys[t]) && v > m_up {
                m_up = v;
                i_best = Some(t);
            }
            if in_low(alpha[t], ys[t]) && v < m_low {
                m_low = v;
                j_best = Some(t);
            }
        }
        gap = m_up - m_low;
        let (Some(i), Some(j)) = (i_best, j_best) else {
            converged = true;
            break;
        };
        if gap < tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_updates {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if ys[i] != ys[j] {
            let mut quad = qii + qjj + S::lit(2.0) * qij;
            if quad < neg_curv {
                return Err(Error::Numeric("negative curvature: Gram is not PSD".into()));
            }
            if quad <= zero {
                quad = tau;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] = alpha[i] + delta;
            alpha[j] = alpha[j] + delta;
            if diff > zero {
                if alpha[j] < zero {
                    alpha[j] = zero;
                    alpha[i] = diff;
                }
            } else if alpha[i] < zero {
                alpha[i] = zero;
                alpha[j] = -diff;
            }
            if diff > zero {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - S::lit(2.0) * qij;
            if quad < neg_curv {
                return Err(Error::Numeric("negative curvature: Gram is not PSD".into()));
            }
            if quad <= zero {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] = alpha[i] - delta;
            alpha[j] = alpha[j] + delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < zero {
                alpha[j] = zero;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < zero {
                alpha[i] = zero;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g = *g + q(t, i) * di + q(t, j) * dj;
        }
    }

    let b = offset(&alpha, &ys, &grad, c);
    let objective = dual_objective(k, y, &alpha);
    if !objective.is_finite() {
        return Err(Error::Numeric("dual objective is not finite".into()));
    }
    Ok(DualSolution { alpha, b, objective, kkt_violation: gap.max(zero), iterations, converged })
}

fn is_feasible<S: Real>(alpha: &[S], ys: &[S], c: S) -> bool {
    if alpha.len() != ys.len() {
        return false;
    }
    let scale = c.max(S::one());
    let bal: S = alpha.iter().zip(ys).map(|(&a, &y)| a * y).sum();
    alpha.iter().all(|&a| a >= S::zero() && a <= c) && bal.abs() <= S::lit(1e-12) * scale * S::from_usize_lossy(alpha.len())
}

/// Offset from the KKT conditions. With free support vectors, `b` is the
/// midpoint of their `y_i − g_i` values; otherwise the midpoint of the
/// interval left by the bound constraints.
fn offset<S: Real>(alpha: &[S], ys: &[S], grad: &[S], c: S) -> S {
    let zero = S::zero();
    let half = S::lit(0.5);
    let mut free_lo = S::infinity();
    let mut free_hi = S::neg_infinity();
    let mut lower = S::neg_infinity();
    let mut upper = S::infinity();
    for t in 0..alpha.len() {
        // −y_t G_t = y_t − g_t
        let v = -ys[t] * grad[t];
        if alpha[t] > zero && alpha[t] < c {
            free_lo = free_lo.min(v);
            free_hi = free_hi.max(v);
        } else if (ys[t] > zero) == (alpha[t] <= zero) {
            // y=+1 at 0 or y=-1 at c: b ≥ v
            lower = lower.max(v);
        } else {
            upper = upper.min(v);
        }
    }
    if free_lo.is_finite() {
        (free_lo + free_hi) * half
    } else if lower.is_finite() && upper.is_finite() {
        (lower + upper) * half
    } else if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        zero
    }
}

/// Largest KKT residual of a solution measured on margins `y_i f(x_i)`:
/// `α=0 ⇒ yf ≥ 1`, `α=c ⇒ yf ≤ 1`, otherwise `yf = 1`.
pub fn margin_kkt_residual<S: Real>(k: &SquareMatrix<S>, y: &[i8], c: S, sol: &DualSolution<S>) -> S {
    let g = expansion(k, y, &sol.alpha);
    let mut worst = S::zero();
    for i in 0..y.len() {
        let yf = signed(g[i] + sol.b, y[i]);
        let a = sol.alpha[i];
        let r = if a <= S::zero() {
            (S::one() - yf).max(S::zero())
        } else if a >= c {
            (yf - S::one()).max(S::zero())
        } else {
            (yf - S::one()).abs()
        };
        worst = worst.max(r);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> (SquareMatrix<f64>, Vec<i8>) {
        let k = SquareMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        (k, vec![1, -1])
    }

    #[test]
    fn two_points_on_a_line() {
        // maximise 2a − 2a² with α1 = α2 = a: a = 1/2, w = 1, f(x) = x
        let (k, y) = two_point();
        let sol = solve_svm_dual(&k, &y, 10.0, &SolverOptions::default()).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-12 && (sol.alpha[1] - 0.5).abs() < 1e-12);
        assert!(sol.b.abs() < 1e-12);
        assert!((sol.objective - 0.5).abs() < 1e-12);
        // brute force over the diagonal of the box
        let best = (0..=100_000)
            .map(|i| {
                let a = i as f64 * 1e-4;
                dual_objective(&k, &y, &[a, a])
            })
            .fold(f64::MIN, f64::max);
        assert!((best - sol.objective).abs() < 1e-8);
    }

    #[test]
    fn duplicated_point_opposite_labels() {
        let k = SquareMatrix::from_rows(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        let y = vec![1, -1];
        let sol = solve_svm_dual(&k, &y, 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.alpha, vec![1.0, 1.0]);
        let mut best = f64::MIN;
        for i in 0..=10_000 {
            {
                let j = i;
                // equality constraint forces α1 = α2
                best = best.max(dual_objective(&k, &y, &[i as f64 * 1e-4, j as f64 * 1e-4]));
            }
        }
        assert!((sol.objective - best).abs() < 1e-12);
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_box_collapses() {
        let (k, y) = two_point();
        let sol = solve_svm_dual(&k, &y, 1e-9, &SolverOptions::default()).unwrap();
        assert!(sol.alpha.iter().all(|&a| a <= 1e-9));
        assert!(sol.objective.abs() < 1e-8);
    }

    #[test]
    fn zero_alpha_objective() {
        let (k, y) = two_point();
        assert_eq!(dual_objective(&k, &y, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let (k, _) = two_point();
        assert!(matches!(solve_svm_dual(&k, &[1, 1], 1.0, &SolverOptions::default()), Err(Error::DegenerateTask)));
    }

    #[test]
    fn indefinite_gram_is_numeric_error() {
        let k = SquareMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let r = solve_svm_dual(&k, &[1, -1], 1.0, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let k = SquareMatrix::from_fn(6, |i, j| (-((i as f64) - (j as f64)).powi(2) / 4.0).exp());
        let y = vec![1, 1, -1, 1, -1, -1];
        let cold = solve_svm_dual(&k, &y, 2.0, &SolverOptions::default()).unwrap();
        let warm = solve_svm_dual_warm(&k, &y, 2.0, &SolverOptions::default(), Some(&cold.alpha)).unwrap();
        assert_eq!(warm.iterations, 0);
        assert_eq!(warm.alpha, cold.alpha);
    }
}
