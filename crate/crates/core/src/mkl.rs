//! Multi-task multiple kernel learning: one conic combination
//! `Σ_m θ_m K^m`, `θ` on the `lr` ball, shared by every task.
//!
//! For `1 ≤ s ≤ 2` the trainer cycles SVMs on `λ_t Σ_m θ_m K_t^m`, a projected
//! gradient step on `θ` with the weights held fixed, and the closed-form `λ`.
//! For `s > 2` it minimises `J(θ) = max_{α,λ}` of the saddle value by
//! projected subgradient descent, with the Danskin gradient
//! `∂J/∂θ_m = −½ Σ_t λ_t α_t'Y K_t^m Y α_t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultiTaskDataset;
use crate::error::{Error, Result};
use crate::kernels::{build_gram, GramStack, KernelSpec};
use crate::matrix::SquareMatrix;
use crate::mtl::{
    coupled_regularizer, fit_large_s, labels_of, power_mean_sum, small_s_lambda_exponent, solve_tasks, training_hinge,
    Fit, Predictor, TaskModel, TrainDiagnostics, TrainOptions, WarmStart, MONOTONE_SLACK,
};
use crate::norms::{floor_into_ball, project_lr_ball, reciprocal_minimizer, uniform_ball_point, Exponent};
use crate::qp::weight_norm_sq;
use crate::scalar::Real;

/// Lower bound kept on every `θ_m`.
pub const THETA_FLOOR: f64 = 1e-8;
/// Outer step cap of the subgradient scheme.
pub const SUBGRADIENT_MAX_STEPS: usize = 100;
pub const SUBGRADIENT_STEP0: f64 = 0.1;
/// `θ` movement (l2) that ends the subgradient scheme.
pub const SUBGRADIENT_MOVE_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MklModel<S: Real> {
    pub s: Exponent,
    pub r: Exponent,
    #[serde(rename = "C")]
    pub c: f64,
    pub kernels: Vec<KernelSpec>,
    pub theta: Vec<S>,
    pub lambda: Vec<S>,
    pub tasks: Vec<TaskModel<S>>,
    pub diagnostics: TrainDiagnostics,
    /// `θ` after each outer step (small s) or each visited iterate (large s).
    #[serde(default)]
    pub theta_trace: Vec<Vec<f64>>,
}

impl<S: Real> MklModel<S> {
    fn combined_kernel(&self, a: &[S], b: &[S]) -> S {
        self.kernels.iter().zip(&self.theta).map(|(k, &th)| if th == S::zero() { S::zero() } else { th * k.eval(a, b) }).sum()
    }
}

impl<S: Real> Predictor<S> for MklModel<S> {
    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn decision(&self, x: &[S], task: usize) -> Result<S> {
        let tm = self.tasks.get(task).ok_or(Error::InvalidTask { index: task, tasks: self.tasks.len() })?;
        Ok(tm.decision(x, |a, b| self.combined_kernel(a, b)))
    }
}

/// `scale_t · Σ_i α_i y_i Σ_m θ_m k_m(x_i, x) + b_t`.
pub fn predict_mkl<S: Real>(model: &MklModel<S>, x: &[S], task: usize) -> Result<S> {
    model.decision(x, task)
}

/// `(Σ_t (Σ_m ‖w_t^m‖²/(2θ_m))^{s/2})^{2/s} + C Σ hinge` of `model` on `data`.
pub fn mkl_objective_value<S: Real>(model: &MklModel<S>, data: &MultiTaskDataset<S>) -> Result<f64> {
    let kernel = |a: &[S], b: &[S]| model.combined_kernel(a, b);
    let wsq: Vec<f64> = model.tasks.iter().map(|tm| tm.weight_norm_sq(kernel).as_f64()).collect();
    let hinge = crate::mtl::hinge_total(model, data)?;
    Ok(coupled_regularizer(&wsq, model.s) + model.c * hinge)
}

fn check_r(r: Exponent) -> Result<()> {
    if r.value() < 1.0 {
        return Err(Error::InvalidParameter(format!("r must be >= 1, got {r}")));
    }
    Ok(())
}

fn composite_grams<S: Real>(g: &GramStack<S>, theta: &[S]) -> Vec<SquareMatrix<S>> {
    (0..g.num_tasks()).into_par_iter().map(|t| g.combined(t, theta)).collect()
}

/// `q_tm = α_t'Y K_t^m Y α_t` for every task and kernel.
fn per_kernel_quads<S: Real>(g: &GramStack<S>, labels: &[Vec<i8>], alpha: &[Vec<S>]) -> Vec<Vec<S>> {
    (0..g.num_tasks())
        .into_par_iter()
        .map(|t| g.mats[t].iter().map(|k| weight_norm_sq(k, &labels[t], &alpha[t])).collect())
        .collect()
}

/// `F(θ) = (Σ_t A_t(θ)^{s/2})^{2/s}` with `A_t(θ) = Σ_m W_tm / (2θ_m)`.
fn theta_block_value<S: Real>(w: &[Vec<S>], theta: &[S], s: Exponent) -> f64 {
    let a: Vec<f64> = w.iter().map(|row| block_a(row, theta)).collect();
    power_mean_sum(&a, s.value() / 2.0)
}

fn block_a<S: Real>(row: &[S], theta: &[S]) -> f64 {
    row.iter().zip(theta).map(|(&wm, &th)| if wm == S::zero() { 0.0 } else { wm.as_f64() / (2.0 * th.as_f64()) }).sum()
}

/// Projected gradient descent on `F` over the `lr` ball with floor, from `theta`.
/// Never returns a point with a larger `F`.
pub(crate) fn theta_step_small_s<S: Real>(w: &[Vec<S>], theta: &[S], s: Exponent, r: Exponent) -> Vec<S> {
    let m = theta.len();
    if m == 1 {
        return theta.to_vec();
    }
    let floor = S::lit(THETA_FLOOR);
    let half_s = s.value() / 2.0;
    let mut th: Vec<f64> = theta.iter().map(|x| x.as_f64()).collect();
    let to_s = |v: &[f64]| -> Vec<S> { v.iter().map(|&x| S::lit(x)).collect() };
    let mut value = theta_block_value(w, theta, s);
    if value == 0.0 {
        return theta.to_vec();
    }
    let mut step = f64::NAN;
    for _ in 0..200 {
        // ∂F/∂θ_m = −Σ_t c_t W_tm / (2θ_m²), c_t = ∂F/∂A_t
        let a: Vec<f64> = w.iter().map(|row| block_a(row, &to_s(&th))).collect();
        let mut grad = vec![0.0; m];
        for (row, &at) in w.iter().zip(&a) {
            if at <= 0.0 {
                continue;
            }
            let ct = if half_s == 1.0 { 1.0 } else { value.powf(1.0 - half_s) * at.powf(half_s - 1.0) };
            for (k, &wm) in row.iter().enumerate() {
                grad[k] -= ct * wm.as_f64() / (2.0 * th[k] * th[k]);
            }
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        if step.is_nan() {
            step = th.iter().map(|x| x * x).sum::<f64>().sqrt() / gnorm;
        }
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<S> = th.iter().zip(&grad).map(|(&x, &g)| S::lit(x - step * g)).collect();
            let mut cand = project_lr_ball(&trial, r);
            floor_into_ball(&mut cand, floor, r);
            let cand_val = theta_block_value(w, &cand, s);
            let decrease: f64 = cand.iter().zip(&th).zip(&grad).map(|((&c, &x), &g)| g * (x - c.as_f64())).sum();
            if cand_val <= value - 1e-4 * decrease.max(0.0) && cand_val <= value {
                accepted = Some((cand, cand_val));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_val)) = accepted else { break };
        let improvement = value - cand_val;
        th = cand.iter().map(|x| x.as_f64()).collect();
        value = cand_val;
        step *= 2.0;
        if improvement <= 1e-12 * value.abs() {
            break;
        }
    }
    to_s(&th)
}

fn relative_change(prev: f64, now: f64) -> f64 {
    (now - prev).abs() / prev.abs().max(now.abs()).max(f64::MIN_POSITIVE)
}

/// Gram-level three-block descent for `1 ≤ s ≤ 2`. Returns the fit and the
/// final `θ` with its trace.
pub fn fit_mkl_small_s<S: Real>(
    g: &GramStack<S>,
    labels: &[Vec<i8>],
    s: Exponent,
    r: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<(Fit<S>, Vec<S>, Vec<Vec<f64>>)> {
    check_r(r)?;
    let p = small_s_lambda_exponent(s)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if labels.len() != g.num_tasks() {
        return Err(Error::InvalidDataset("need one label vector per task".into()));
    }
    let (t, m) = (g.num_tasks(), g.num_kernels());
    let boxes = vec![S::lit(c); t];
    let lambda_floor = S::lit(opts.lambda_floor);
    let mut theta: Vec<S> = if m == 1 { vec![S::one()] } else { uniform_ball_point(m, r) };
    let mut lambda: Vec<S> = uniform_ball_point(t, p);
    let mut warm: Option<Vec<Vec<S>>> = None;
    let mut diag = TrainDiagnostics::default();
    let mut theta_trace = Vec::new();
    type State<S> = (Vec<S>, Vec<S>, Vec<crate::mtl::TaskSolve<S>>, Vec<SquareMatrix<S>>, f64);
    let mut accepted: Option<State<S>> = None;

    for iter in 1..=opts.max_outer.max(1) {
        let grams = composite_grams(g, &theta);
        let sols = solve_tasks(&grams, &lambda, labels, &boxes, warm.as_deref(), &opts.solver)?;
        let wsq: Vec<f64> = sols.iter().zip(&lambda).map(|(sol, &l)| (l * l * sol.quad).as_f64()).collect();
        let obj = coupled_regularizer(&wsq, s) + c * training_hinge(&grams, labels, &sols, &lambda);
        if !obj.is_finite() {
            return Err(Error::Numeric(format!("objective became {obj} at outer iteration {iter}")));
        }
        diag.outer_iterations = iter;
        let mut done = false;
        if let Some(prev) = accepted.as_ref().map(|a| a.4) {
            if obj > prev + MONOTONE_SLACK * prev.abs().max(1.0) {
                log::warn!("objective rose from {prev} to {obj}; keeping the previous iterate");
                diag.rejected_increase = Some(obj - prev);
                diag.converged = relative_change(prev, obj) < opts.tol;
                break;
            }
            done = relative_change(prev, obj) < opts.tol;
        }
        diag.objective_trace.push(obj);
        theta_trace.push(theta.iter().map(|x| x.as_f64()).collect());
        let alpha: Vec<Vec<S>> = sols.iter().map(|s| s.alpha.clone()).collect();
        accepted = Some((theta.clone(), lambda.clone(), sols, grams, obj));
        if done || (p.is_infinite() && m == 1) {
            diag.converged = true;
            break;
        }
        // ‖w_t^m‖² = θ_m² λ_t² α_t'Y K_t^m Y α_t
        let q = per_kernel_quads(g, labels, &alpha);
        let w: Vec<Vec<S>> = q
            .iter()
            .zip(&lambda)
            .map(|(row, &l)| row.iter().zip(&theta).map(|(&qm, &th)| th * th * (l * l * qm)).collect())
            .collect();
        theta = theta_step_small_s(&w, &theta, s, r);
        let a: Vec<S> = w
            .iter()
            .map(|row| row.iter().zip(&theta).map(|(&wm, &th)| if wm == S::zero() { S::zero() } else { wm / (S::lit(2.0) * th) }).sum())
            .collect();
        let mut next = reciprocal_minimizer(&a, p);
        floor_into_ball(&mut next, lambda_floor, p);
        lambda = next;
        warm = Some(alpha);
    }

    let (theta, lambda, sols, _grams, obj) = accepted.expect("at least one outer iteration");
    diag.objective = obj;
    diag.degenerate_tasks = sols.iter().enumerate().filter(|(_, s)| s.degenerate).map(|(t, _)| t).collect();
    diag.max_kkt_violation = sols.iter().map(|s| s.kkt.as_f64()).fold(0.0, f64::max);
    diag.inner_converged = sols.iter().all(|s| s.converged);
    let fit = Fit {
        b: sols.iter().map(|s| s.b).collect(),
        quad: sols.iter().map(|s| s.quad).collect(),
        alpha: sols.into_iter().map(|s| s.alpha).collect(),
        scale: lambda.clone(),
        lambda,
        diagnostics: diag,
    };
    Ok((fit, theta, theta_trace))
}

/// Gram-level projected subgradient descent on `J(θ)` for `s > 2`. Returns
/// the best-`J` fit, its `θ`, and the visited `θ` sequence.
///
/// Each step moves `θ` by `η_k = η_0/√k` (l2) along the projected path of the
/// normalised Danskin subgradient, starting from the best iterate so far; a
/// step that fails to lower `J` halves `η_0`.
pub fn fit_mkl_large_s<S: Real>(
    g: &GramStack<S>,
    labels: &[Vec<i8>],
    s: Exponent,
    r: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<(Fit<S>, Vec<S>, Vec<Vec<f64>>)> {
    check_r(r)?;
    if labels.len() != g.num_tasks() {
        return Err(Error::InvalidDataset("need one label vector per task".into()));
    }
    let m = g.num_kernels();
    let floor = S::lit(THETA_FLOOR);
    let to_f64 = |v: &[S]| -> Vec<f64> { v.iter().map(|x| x.as_f64()).collect() };
    let evaluate = |theta: &[S], warm: Option<&WarmStart<S>>| -> Result<(f64, Vec<f64>, Fit<S>)> {
        let grams = composite_grams(g, theta);
        let fit = fit_large_s(&grams, labels, s, c, opts, warm).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("inner solve at θ = {:?}: {msg}", to_f64(theta))),
            other => other,
        })?;
        if !fit.diagnostics.converged {
            log::warn!("inner ascent did not converge at θ = {:?}", to_f64(theta));
        }
        let j = fit.diagnostics.dual_value.expect("large-s fit reports its dual value");
        // Danskin: ∂J/∂θ_m = −½ Σ_t λ_t α_t'Y K_t^m Y α_t
        let q = per_kernel_quads(g, labels, &fit.alpha);
        let grad = (0..m)
            .map(|mm| -0.5 * q.iter().zip(&fit.lambda).map(|(row, &l)| (l * row[mm]).as_f64()).sum::<f64>())
            .collect();
        Ok((j, grad, fit))
    };

    let theta0: Vec<S> = if m == 1 { vec![S::one()] } else { uniform_ball_point(m, r) };
    let (j0, grad0, fit0) = evaluate(&theta0, None)?;
    let mut trace_j = vec![j0];
    let mut theta_trace = vec![to_f64(&theta0)];
    let mut best = (j0, theta0, grad0, fit0);
    let mut eta0 = SUBGRADIENT_STEP0;
    let mut converged = m == 1;
    let mut steps = 1;
    if m > 1 {
        for k in 1..SUBGRADIENT_MAX_STEPS {
            let eta = eta0 / (k as f64).sqrt();
            let next = projected_move(&best.1, &best.2, r, eta, floor);
            let moved = next.as_ref().map_or(0.0, |n| {
                n.iter().zip(&best.1).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum::<f64>().sqrt()
            });
            let Some(next) = next.filter(|_| moved >= SUBGRADIENT_MOVE_TOL) else {
                converged = true;
                break;
            };
            steps += 1;
            let warm = WarmStart { alpha: best.3.alpha.clone(), lambda: best.3.lambda.clone() };
            let (j, grad, fit) = evaluate(&next, Some(&warm))?;
            trace_j.push(j);
            theta_trace.push(to_f64(&next));
            if j < best.0 {
                best = (j, next, grad, fit);
            } else {
                eta0 *= 0.5;
            }
        }
    }

    let (_, theta, _, mut fit) = best;
    fit.diagnostics.outer_iterations = steps;
    fit.diagnostics.converged = converged && fit.diagnostics.converged;
    fit.diagnostics.objective_trace = trace_j;
    Ok((fit, theta, theta_trace))
}

/// The point `P(θ − t·g/‖g‖)` (projected, floored) at l2 distance `eta` from
/// `θ`, or the farthest reachable one; `None` for a zero gradient.
fn projected_move<S: Real>(theta: &[S], grad: &[f64], r: Exponent, eta: f64, floor: S) -> Option<Vec<S>> {
    let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
    if gnorm == 0.0 || !gnorm.is_finite() {
        return None;
    }
    let point = |t: f64| -> Vec<S> {
        let trial: Vec<S> = theta.iter().zip(grad).map(|(&th, &gm)| th - S::lit(t * gm / gnorm)).collect();
        let mut p = project_lr_ball(&trial, r);
        floor_into_ball(&mut p, floor, r);
        p
    };
    let dist = |p: &[S]| -> f64 { p.iter().zip(theta).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum::<f64>().sqrt() };
    let mut hi = eta;
    while dist(&point(hi)) < eta && hi < 1e6 * eta.max(1.0) {
        hi *= 2.0;
    }
    if dist(&point(hi)) <= eta {
        return Some(point(hi));
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dist(&point(mid)) < eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(point(hi))
}

fn assemble<S: Real>(
    data: &MultiTaskDataset<S>,
    kernels: Vec<KernelSpec>,
    s: Exponent,
    r: Exponent,
    c: f64,
    (fit, theta, theta_trace): (Fit<S>, Vec<S>, Vec<Vec<f64>>),
) -> MklModel<S> {
    let degenerate = &fit.diagnostics.degenerate_tasks;
    let tasks = data
        .tasks
        .iter()
        .enumerate()
        .zip(fit.alpha)
        .map(|((t, task), alpha)| {
            TaskModel::from_dual(&task.name, &task.features, &task.labels, alpha, fit.b[t], fit.scale[t], degenerate.contains(&t))
        })
        .collect();
    MklModel { s, r, c, kernels, theta, lambda: fit.lambda, tasks, diagnostics: fit.diagnostics, theta_trace }
}

fn resolved_kernels(kernels: &[KernelSpec]) -> Vec<KernelSpec> {
    kernels.iter().map(|k| k.resolved(false)).collect()
}

pub fn train_mkl_small_s<S: Real>(
    data: &MultiTaskDataset<S>,
    kernels: &[KernelSpec],
    s: Exponent,
    r: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<MklModel<S>> {
    let kernels = resolved_kernels(kernels);
    let g = build_gram(data, &kernels)?;
    let out = fit_mkl_small_s(&g, &labels_of(data), s, r, c, opts)?;
    Ok(assemble(data, kernels, s, r, c, out))
}

pub fn train_mkl_large_s<S: Real>(
    data: &MultiTaskDataset<S>,
    kernels: &[KernelSpec],
    s: Exponent,
    r: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<MklModel<S>> {
    let kernels = resolved_kernels(kernels);
    let g = build_gram(data, &kernels)?;
    let out = fit_mkl_large_s(&g, &labels_of(data), s, r, c, opts)?;
    Ok(assemble(data, kernels, s, r, c, out))
}

/// Dispatches on `s`.
pub fn train_mkl<S: Real>(
    data: &MultiTaskDataset<S>,
    kernels: &[KernelSpec],
    s: Exponent,
    r: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<MklModel<S>> {
    if s.value() <= 2.0 {
        train_mkl_small_s(data, kernels, s, r, c, opts)
    } else {
        train_mkl_large_s(data, kernels, s, r, c, opts)
    }
}
