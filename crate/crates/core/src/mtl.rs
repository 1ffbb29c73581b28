//! lp-coupled multi-task SVM with one fixed kernel.
//!
//! Primal:
//!
//! ```text
//! min (Σ_t (‖w_t‖²/2)^{s/2})^{2/s} + C Σ_{t,i} ξ_t^i
//! s.t. y (⟨w_t, φ(x)⟩ + b_t) ≥ 1 − ξ, ξ ≥ 0
//! ```
//!
//! For `1 ≤ s ≤ 2` this equals `min Σ_t ‖w_t‖²/(2λ_t) + C Σ ξ` over the
//! `s/(2−s)` ball in `λ`; alternating an SVM on `λ_t K_t` with the closed-form
//! `λ_t ∝ ‖w_t‖^{2−s}` descends it. For `s > 2` the problem is the saddle point
//! `max_{α,λ} Σ_t λ_t (α_t'1 − ½ α_t'Q_tα_t)` with `0 ⪯ α_t ⪯ C/λ_t` over the
//! `s/(s−2)` ball. In the variables `β_t = λ_t α_t` that objective is jointly
//! concave with a fixed box, so alternating exact maximisation in `β` (an SVM
//! with box `C/λ_t`) and in `λ` (`min Σ a_t/λ_t`, `a_t = ½ β_t'Q_tβ_t`) ascends
//! it monotonically. At the fixed point `λ` is the Hölder maximizer of
//! `½ α_t'Q_tα_t`, the partial derivative of the value in `λ_t`.

use std::borrow::Cow;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultiTaskDataset;
use crate::error::{Error, Result};
use crate::kernels::{build_gram, KernelSpec};
use crate::matrix::SquareMatrix;
use crate::mkl::MklModel;
use crate::norms::{floor_into_ball, holder_maximizer, reciprocal_minimizer, uniform_ball_point, Exponent};
use crate::qp::{dual_objective, expansion, solve_svm_dual_warm, weight_norm_sq, SolverOptions};
use crate::scalar::Real;

pub const DEFAULT_MAX_OUTER: usize = 200;
pub const DEFAULT_OUTER_TOL: f64 = 1e-6;
/// Lower bound kept on every `λ_t` so each subproblem stays well-posed.
pub const LAMBDA_FLOOR: f64 = 1e-8;
/// Relative slack before an objective move counts as going the wrong way.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub max_outer: usize,
    /// Relative objective change that ends the outer loop.
    pub tol: f64,
    pub solver: SolverOptions,
    pub lambda_floor: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_outer: DEFAULT_MAX_OUTER,
            tol: DEFAULT_OUTER_TOL,
            solver: SolverOptions { tol: 1e-8, ..SolverOptions::default() },
            lambda_floor: LAMBDA_FLOOR,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub outer_iterations: usize,
    pub converged: bool,
    /// Primal value of the coupled objective at the returned iterate.
    pub objective: f64,
    /// Saddle (dual) value for `s > 2`.
    #[serde(default)]
    pub dual_value: Option<f64>,
    /// Accepted outer objective values, in order.
    pub objective_trace: Vec<f64>,
    /// Size of an objective move against the descent direction that stopped
    /// the loop; the previous iterate was kept.
    #[serde(default)]
    pub rejected_increase: Option<f64>,
    pub degenerate_tasks: Vec<usize>,
    pub max_kkt_violation: f64,
    pub inner_converged: bool,
}

/// One trained task: its dual and the support vectors needed to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TaskModel<S: Real> {
    pub name: String,
    /// Full dual vector over the task's training points.
    pub alpha: Vec<S>,
    pub b: S,
    /// Multiplier on the kernel expansion (`λ_t` for `s ≤ 2`, else 1).
    pub scale: S,
    pub support: Vec<Vec<S>>,
    /// `α_i y_i` for each support vector.
    pub support_coef: Vec<S>,
    /// Single-class task trained as the constant `b`.
    pub degenerate: bool,
}

impl<S: Real> TaskModel<S> {
    pub(crate) fn from_dual(name: &str, features: &[Vec<S>], labels: &[i8], alpha: Vec<S>, b: S, scale: S, degenerate: bool) -> Self {
        let mut support = Vec::new();
        let mut support_coef = Vec::new();
        for ((x, &y), &a) in features.iter().zip(labels).zip(&alpha) {
            if a > S::zero() {
                support.push(x.clone());
                support_coef.push(if y > 0 { a } else { -a });
            }
        }
        Self { name: name.to_string(), alpha, b, scale, support, support_coef, degenerate }
    }

    /// `scale · Σ_i α_i y_i k(x_i, x) + b`.
    pub fn decision(&self, x: &[S], kernel: impl Fn(&[S], &[S]) -> S) -> S {
        let sum: S = self.support.iter().zip(&self.support_coef).map(|(sv, &c)| c * kernel(sv, x)).sum();
        self.scale * sum + self.b
    }

    /// `‖w‖² = scale² · Σ_ij c_i c_j k(x_i, x_j)` over the support vectors.
    pub fn weight_norm_sq(&self, kernel: impl Fn(&[S], &[S]) -> S) -> S {
        let n = self.support.len();
        let mut acc = S::zero();
        for i in 0..n {
            for j in 0..n {
                acc = acc + self.support_coef[i] * self.support_coef[j] * kernel(&self.support[i], &self.support[j]);
            }
        }
        self.scale * self.scale * acc.max(S::zero())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MtlModel<S: Real> {
    pub s: Exponent,
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelSpec,
    pub lambda: Vec<S>,
    pub tasks: Vec<TaskModel<S>>,
    pub diagnostics: TrainDiagnostics,
}

/// Anything that produces per-task decision values.
pub trait Predictor<S: Real> {
    fn num_tasks(&self) -> usize;

    /// Decision value `f_t(x)`; the predicted label is its sign.
    fn decision(&self, x: &[S], task: usize) -> Result<S>;

    fn predict_label(&self, x: &[S], task: usize) -> Result<i8> {
        Ok(if self.decision(x, task)? >= S::zero() { 1 } else { -1 })
    }

    /// Accuracy per task on `data`, whose tasks must align with the model's.
    fn task_accuracies(&self, data: &MultiTaskDataset<S>) -> Result<Vec<f64>> {
        if data.num_tasks() != self.num_tasks() {
            return Err(Error::InvalidDataset(format!(
                "dataset has {} tasks, model has {}",
                data.num_tasks(),
                self.num_tasks()
            )));
        }
        data.tasks
            .iter()
            .enumerate()
            .map(|(t, task)| {
                if task.is_empty() {
                    return Ok(f64::NAN);
                }
                let mut hits = 0usize;
                for (x, &y) in task.features.iter().zip(&task.labels) {
                    if self.predict_label(x, t)? == y {
                        hits += 1;
                    }
                }
                Ok(hits as f64 / task.len() as f64)
            })
            .collect()
    }

    /// Mean of the per-task accuracies (tasks without samples are skipped).
    fn mean_accuracy(&self, data: &MultiTaskDataset<S>) -> Result<f64> {
        let acc: Vec<f64> = self.task_accuracies(data)?.into_iter().filter(|a| !a.is_nan()).collect();
        if acc.is_empty() {
            return Err(Error::InvalidDataset("no samples to evaluate".into()));
        }
        Ok(acc.iter().sum::<f64>() / acc.len() as f64)
    }
}

impl<S: Real> Predictor<S> for MtlModel<S> {
    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn decision(&self, x: &[S], task: usize) -> Result<S> {
        let tm = self.tasks.get(task).ok_or(Error::InvalidTask { index: task, tasks: self.tasks.len() })?;
        Ok(tm.decision(x, |a, b| self.kernel.eval(a, b)))
    }
}

/// Decision value of `model` on `x` for task `task`.
pub fn predict<S: Real>(model: &MtlModel<S>, x: &[S], task: usize) -> Result<S> {
    model.decision(x, task)
}

/// `(Σ_t (‖w_t‖²/2)^{s/2})^{2/s} + C Σ hinge` of `model` on `data`.
pub fn objective_value<S: Real>(model: &MtlModel<S>, data: &MultiTaskDataset<S>) -> Result<f64> {
    let kernel = |a: &[S], b: &[S]| model.kernel.eval(a, b);
    let wsq: Vec<f64> = model.tasks.iter().map(|tm| tm.weight_norm_sq(kernel).as_f64()).collect();
    let hinge = hinge_total(model, data)?;
    Ok(coupled_regularizer(&wsq, model.s) + model.c * hinge)
}

pub(crate) fn hinge_total<S: Real, P: Predictor<S>>(model: &P, data: &MultiTaskDataset<S>) -> Result<f64> {
    if data.num_tasks() != model.num_tasks() {
        return Err(Error::InvalidDataset("dataset and model task counts differ".into()));
    }
    let mut total = 0.0;
    for (t, task) in data.tasks.iter().enumerate() {
        for (x, &y) in task.features.iter().zip(&task.labels) {
            let f = model.decision(x, t)?.as_f64();
            total += (1.0 - y as f64 * f).max(0.0);
        }
    }
    Ok(total)
}

/// `(Σ_t (‖w_t‖²/2)^{s/2})^{2/s}`; `s = ∞` gives `max_t ‖w_t‖²/2`.
pub fn coupled_regularizer(weight_sq: &[f64], s: Exponent) -> f64 {
    let halves: Vec<f64> = weight_sq.iter().map(|w| 0.5 * w.max(0.0)).collect();
    power_mean_sum(&halves, s.value() / 2.0)
}

/// `(Σ v_i^e)^{1/e}` for `v ⪰ 0` and any `e > 0` (max when `e = ∞`), scaled
/// by the peak for stability.
pub(crate) fn power_mean_sum(v: &[f64], e: f64) -> f64 {
    let peak = v.iter().fold(0.0_f64, |m, &x| m.max(x));
    if peak == 0.0 {
        return 0.0;
    }
    if e.is_infinite() {
        return peak;
    }
    peak * v.iter().map(|&x| (x / peak).powf(e)).sum::<f64>().powf(1.0 / e)
}

/// Norm exponent `s/(2−s)` of the `λ` ball for `1 ≤ s ≤ 2` (∞ at `s = 2`).
pub fn small_s_lambda_exponent(s: Exponent) -> Result<Exponent> {
    let v = s.value();
    if !(1.0..=2.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("small-s trainer needs 1 <= s <= 2, got {s}")));
    }
    if v == 2.0 {
        Ok(Exponent::Infinity)
    } else {
        Exponent::new(v / (2.0 - v))
    }
}

/// Norm exponent `s/(s−2)` of the `λ` ball for `s > 2` (1 at `s = ∞`).
pub fn large_s_lambda_exponent(s: Exponent) -> Result<Exponent> {
    match s {
        Exponent::Infinity => Ok(Exponent::ONE),
        Exponent::Finite(v) if v > 2.0 => Exponent::new(v / (v - 2.0)),
        _ => Err(Error::InvalidParameter(format!("large-s trainer needs s > 2, got {s}"))),
    }
}

/// Closed-form `λ` for fixed weights when `1 ≤ s ≤ 2`: the minimizer of
/// `Σ_t ‖w_t‖²/(2λ_t)` over the `s/(2−s)` ball, i.e.
/// `λ_t = ‖w_t‖^{2−s} / (Σ_u ‖w_u‖^s)^{(2−s)/s}`.
pub fn lambda_step_small_s<S: Real>(weight_norms: &[S], s: Exponent) -> Result<Vec<S>> {
    let p = small_s_lambda_exponent(s)?;
    let a: Vec<S> = weight_norms.iter().map(|&w| S::lit(0.5) * w * w).collect();
    Ok(reciprocal_minimizer(&a, p))
}

/// Hölder step for `s > 2`: the maximizer of `g'λ` over the `s/(s−2)` ball.
pub fn lambda_step_large_s<S: Real>(g: &[S], s: Exponent) -> Result<Vec<S>> {
    holder_maximizer(g, large_s_lambda_exponent(s)?)
}

/// Output of the gram-level trainers.
#[derive(Clone, Debug)]
pub struct Fit<S: Real> {
    pub alpha: Vec<Vec<S>>,
    pub b: Vec<S>,
    pub lambda: Vec<S>,
    /// Prediction multiplier per task.
    pub scale: Vec<S>,
    /// `α_t'Y K_t Y α_t` on the unscaled Gram.
    pub quad: Vec<S>,
    pub diagnostics: TrainDiagnostics,
}

/// Warm start for the gram-level trainers.
#[derive(Clone, Debug)]
pub struct WarmStart<S: Real> {
    pub alpha: Vec<Vec<S>>,
    pub lambda: Vec<S>,
}

#[derive(Clone, Debug)]
pub(crate) struct TaskSolve<S: Real> {
    pub alpha: Vec<S>,
    pub b: S,
    pub quad: S,
    pub kkt: S,
    pub converged: bool,
    pub degenerate: bool,
}

/// Solves every task's SVM on `kernel_scale_t · K_t` with box `boxes_t`,
/// in parallel, results in task order.
pub(crate) fn solve_tasks<S: Real>(
    grams: &[SquareMatrix<S>],
    kernel_scale: &[S],
    labels: &[Vec<i8>],
    boxes: &[S],
    warm: Option<&[Vec<S>]>,
    opts: &SolverOptions,
) -> Result<Vec<TaskSolve<S>>> {
    (0..grams.len())
        .into_par_iter()
        .map(|t| {
            let y = &labels[t];
            let n = y.len();
            let has_pos = y.iter().any(|&v| v > 0);
            let has_neg = y.iter().any(|&v| v < 0);
            if !(has_pos && has_neg) {
                let b = if has_pos { S::one() } else { -S::one() };
                return Ok(TaskSolve { alpha: vec![S::zero(); n], b, quad: S::zero(), kkt: S::zero(), converged: true, degenerate: true });
            }
            let k: Cow<SquareMatrix<S>> =
                if kernel_scale[t] == S::one() { Cow::Borrowed(&grams[t]) } else { Cow::Owned(grams[t].scaled(kernel_scale[t])) };
            let sol = solve_svm_dual_warm(&k, y, boxes[t], opts, warm.map(|w| w[t].as_slice()))
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("task {t}: {m}")),
                    other => other,
                })?;
            let quad = weight_norm_sq(&grams[t], y, &sol.alpha);
            Ok(TaskSolve { alpha: sol.alpha, b: sol.b, quad, kkt: sol.kkt_violation, converged: sol.converged, degenerate: false })
        })
        .collect()
}

/// Total hinge loss of the tasks given their unscaled Grams and prediction scales.
pub(crate) fn training_hinge<S: Real>(grams: &[SquareMatrix<S>], labels: &[Vec<i8>], sols: &[TaskSolve<S>], scale: &[S]) -> f64 {
    grams
        .iter()
        .zip(labels)
        .zip(sols)
        .zip(scale)
        .map(|(((k, y), sol), &sc)| {
            let g = expansion(k, y, &sol.alpha);
            g.iter()
                .zip(y)
                .map(|(&gi, &yi)| (1.0 - yi as f64 * (sc * gi + sol.b).as_f64()).max(0.0))
                .sum::<f64>()
        })
        .sum()
}

fn validate_inputs<S: Real>(grams: &[SquareMatrix<S>], labels: &[Vec<i8>], c: f64) -> Result<()> {
    if grams.is_empty() || grams.len() != labels.len() {
        return Err(Error::InvalidDataset("need one Gram and one label vector per task".into()));
    }
    for (t, (k, y)) in grams.iter().zip(labels).enumerate() {
        if k.dim() != y.len() || y.is_empty() {
            return Err(Error::InvalidDataset(format!("task {t}: Gram and labels disagree or are empty")));
        }
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
    }
    Ok(())
}

fn relative_change(prev: f64, now: f64) -> f64 {
    (now - prev).abs() / prev.abs().max(now.abs()).max(f64::MIN_POSITIVE)
}

fn finish_diagnostics(d: &mut TrainDiagnostics, sols: &[TaskSolve<impl Real>]) {
    d.degenerate_tasks = sols.iter().enumerate().filter(|(_, s)| s.degenerate).map(|(t, _)| t).collect();
    d.max_kkt_violation = sols.iter().map(|s| s.kkt.as_f64()).fold(0.0, f64::max);
    d.inner_converged = sols.iter().all(|s| s.converged);
}

/// Block coordinate descent for `1 ≤ s ≤ 2` on precomputed per-task Grams.
pub fn fit_small_s<S: Real>(
    grams: &[SquareMatrix<S>],
    labels: &[Vec<i8>],
    s: Exponent,
    c: f64,
    opts: &TrainOptions,
    warm: Option<&WarmStart<S>>,
) -> Result<Fit<S>> {
    validate_inputs(grams, labels, c)?;
    let p = small_s_lambda_exponent(s)?;
    let t = grams.len();
    let boxes = vec![S::lit(c); t];
    let floor = S::lit(opts.lambda_floor);
    let mut lambda: Vec<S> = match warm {
        Some(w) if w.lambda.len() == t => w.lambda.clone(),
        _ => uniform_ball_point(t, p),
    };
    let mut alpha_warm: Option<Vec<Vec<S>>> = warm.map(|w| w.alpha.clone());
    let mut diag = TrainDiagnostics::default();
    let mut accepted: Option<(Vec<S>, Vec<TaskSolve<S>>, f64)> = None;

    for iter in 1..=opts.max_outer.max(1) {
        let sols = solve_tasks(grams, &lambda, labels, &boxes, alpha_warm.as_deref(), &opts.solver)?;
        let wsq: Vec<f64> = sols.iter().zip(&lambda).map(|(sol, &l)| (l * l * sol.quad).as_f64()).collect();
        let obj = coupled_regularizer(&wsq, s) + c * training_hinge(grams, labels, &sols, &lambda);
        if !obj.is_finite() {
            return Err(Error::Numeric(format!("objective became {obj} at outer iteration {iter}")));
        }
        diag.outer_iterations = iter;
        if let Some((_, _, prev)) = &accepted {
            let prev = *prev;
            if obj > prev + MONOTONE_SLACK * prev.abs().max(1.0) {
                log::warn!("outer objective rose from {prev} to {obj}; keeping the previous iterate");
                diag.rejected_increase = Some(obj - prev);
                diag.converged = relative_change(prev, obj) < opts.tol;
                break;
            }
            let done = relative_change(prev, obj) < opts.tol;
            diag.objective_trace.push(obj);
            accepted = Some((lambda.clone(), sols, obj));
            if done {
                diag.converged = true;
                break;
            }
        } else {
            diag.objective_trace.push(obj);
            accepted = Some((lambda.clone(), sols, obj));
        }
        if p.is_infinite() {
            diag.converged = true;
            break;
        }
        let (_, sols, _) = accepted.as_ref().expect("just stored");
        // ‖w_t‖² = λ_t² α'YKYα for the SVM on λ_t K_t
        let a: Vec<S> = sols.iter().zip(&lambda).map(|(sol, &l)| S::lit(0.5) * (l * l * sol.quad)).collect();
        let mut next = reciprocal_minimizer(&a, p);
        floor_into_ball(&mut next, floor, p);
        lambda = next;
        alpha_warm = Some(sols.iter().map(|s| s.alpha.clone()).collect());
    }

    let (lambda, sols, obj) = accepted.expect("at least one outer iteration");
    diag.objective = obj;
    finish_diagnostics(&mut diag, &sols);
    Ok(Fit {
        b: sols.iter().map(|s| s.b).collect(),
        quad: sols.iter().map(|s| s.quad).collect(),
        alpha: sols.into_iter().map(|s| s.alpha).collect(),
        scale: lambda.clone(),
        lambda,
        diagnostics: diag,
    })
}

/// Monotone ascent on the saddle value for `s > 2` on precomputed Grams.
pub fn fit_large_s<S: Real>(
    grams: &[SquareMatrix<S>],
    labels: &[Vec<i8>],
    s: Exponent,
    c: f64,
    opts: &TrainOptions,
    warm: Option<&WarmStart<S>>,
) -> Result<Fit<S>> {
    validate_inputs(grams, labels, c)?;
    let p = large_s_lambda_exponent(s)?;
    let t = grams.len();
    let floor = S::lit(opts.lambda_floor);
    let ones = vec![S::one(); t];
    let mut lambda: Vec<S> = match warm {
        Some(w) if w.lambda.len() == t => w.lambda.clone(),
        _ => uniform_ball_point(t, p),
    };
    let mut alpha_warm: Option<Vec<Vec<S>>> = warm.map(|w| w.alpha.clone());
    let mut diag = TrainDiagnostics::default();
    let mut accepted: Option<(Vec<S>, Vec<TaskSolve<S>>, f64)> = None;

    for iter in 1..=opts.max_outer.max(1) {
        let boxes: Vec<S> = lambda.iter().map(|&l| S::lit(c) / l).collect();
        let sols = solve_tasks(grams, &ones, labels, &boxes, alpha_warm.as_deref(), &opts.solver)?;
        let value: f64 = sols
            .iter()
            .zip(grams)
            .zip(labels)
            .zip(&lambda)
            .map(|(((sol, k), y), &l)| if sol.degenerate { 0.0 } else { (l * dual_objective(k, y, &sol.alpha)).as_f64() })
            .sum();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("dual value became {value} at outer iteration {iter}")));
        }
        diag.outer_iterations = iter;
        if let Some((_, _, prev)) = &accepted {
            let prev = *prev;
            if value < prev - MONOTONE_SLACK * prev.abs().max(1.0) {
                log::warn!("outer dual value fell from {prev} to {value}; keeping the previous iterate");
                diag.rejected_increase = Some(prev - value);
                diag.converged = relative_change(prev, value) < opts.tol;
                break;
            }
            let done = relative_change(prev, value) < opts.tol;
            diag.objective_trace.push(value);
            accepted = Some((lambda.clone(), sols, value));
            if done {
                diag.converged = true;
                break;
            }
        } else {
            diag.objective_trace.push(value);
            accepted = Some((lambda.clone(), sols, value));
        }
        let (_, sols, _) = accepted.as_ref().expect("just stored");
        // exact maximisation in λ for fixed β = λα: min Σ a_t/λ_t, a_t = ½ λ_t² α'Qα
        let a: Vec<S> = sols.iter().zip(&lambda).map(|(sol, &l)| S::lit(0.5) * (l * l * sol.quad)).collect();
        let mut next = reciprocal_minimizer(&a, p);
        floor_into_ball(&mut next, floor, p);
        alpha_warm = Some(
            sols.iter()
                .zip(lambda.iter().zip(&next))
                .map(|(sol, (&old, &new))| sol.alpha.iter().map(|&x| x * old / new).collect())
                .collect(),
        );
        lambda = next;
    }

    let (lambda, sols, value) = accepted.expect("at least one outer iteration");
    let wsq: Vec<f64> = sols.iter().map(|sol| sol.quad.as_f64()).collect();
    diag.objective = coupled_regularizer(&wsq, s) + c * training_hinge(grams, labels, &sols, &ones);
    diag.dual_value = Some(value);
    finish_diagnostics(&mut diag, &sols);
    Ok(Fit {
        b: sols.iter().map(|s| s.b).collect(),
        quad: sols.iter().map(|s| s.quad).collect(),
        alpha: sols.into_iter().map(|s| s.alpha).collect(),
        scale: ones,
        lambda,
        diagnostics: diag,
    })
}

fn single_kernel_grams<S: Real>(data: &MultiTaskDataset<S>, kernel: &KernelSpec) -> Result<Vec<SquareMatrix<S>>> {
    let stack = build_gram(data, &[*kernel])?;
    Ok(stack.mats.into_iter().map(|mut row| row.remove(0)).collect())
}

pub(crate) fn labels_of<S: Real>(data: &MultiTaskDataset<S>) -> Vec<Vec<i8>> {
    data.tasks.iter().map(|t| t.labels.clone()).collect()
}

fn assemble_model<S: Real>(data: &MultiTaskDataset<S>, kernel: KernelSpec, s: Exponent, c: f64, fit: Fit<S>) -> MtlModel<S> {
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
    MtlModel { s, c, kernel, lambda: fit.lambda, tasks, diagnostics: fit.diagnostics }
}

/// Trains the coupled SVM for `1 ≤ s ≤ 2`.
pub fn train_small_s<S: Real>(
    data: &MultiTaskDataset<S>,
    kernel: &KernelSpec,
    s: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<MtlModel<S>> {
    let kernel = kernel.resolved(false);
    let grams = single_kernel_grams(data, &kernel)?;
    let fit = fit_small_s(&grams, &labels_of(data), s, c, opts, None)?;
    Ok(assemble_model(data, kernel, s, c, fit))
}

/// Trains the coupled SVM for `s > 2`.
pub fn train_large_s<S: Real>(
    data: &MultiTaskDataset<S>,
    kernel: &KernelSpec,
    s: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<MtlModel<S>> {
    let kernel = kernel.resolved(false);
    let grams = single_kernel_grams(data, &kernel)?;
    let fit = fit_large_s(&grams, &labels_of(data), s, c, opts, None)?;
    Ok(assemble_model(data, kernel, s, c, fit))
}

/// Dispatches on `s`.
pub fn train_mtl<S: Real>(
    data: &MultiTaskDataset<S>,
    kernel: &KernelSpec,
    s: Exponent,
    c: f64,
    opts: &TrainOptions,
) -> Result<MtlModel<S>> {
    if s.value() <= 2.0 {
        train_small_s(data, kernel, s, c, opts)
    } else {
        train_large_s(data, kernel, s, c, opts)
    }
}

pub const MODEL_FORMAT: &str = "lpmtl-model";
pub const MODEL_VERSION: u32 = 1;

/// A trained model of either kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "")]
pub enum AnyModel<S: Real> {
    Mtl(MtlModel<S>),
    Mkl(MklModel<S>),
}

impl<S: Real> Predictor<S> for AnyModel<S> {
    fn num_tasks(&self) -> usize {
        match self {
            AnyModel::Mtl(m) => m.num_tasks(),
            AnyModel::Mkl(m) => m.num_tasks(),
        }
    }

    fn decision(&self, x: &[S], task: usize) -> Result<S> {
        match self {
            AnyModel::Mtl(m) => m.decision(x, task),
            AnyModel::Mkl(m) => m.decision(x, task),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct ModelDocument<S: Real> {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: AnyModel<S>,
}

impl<S: Real> AnyModel<S> {
    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let doc = ModelDocument { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: self.clone() };
        serde_json::to_writer_pretty(writer, &doc).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader).map_err(|e| Error::ModelFormat(e.to_string()))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(MODEL_FORMAT) => {}
            _ => return Err(Error::ModelFormat(format!("not an {MODEL_FORMAT} document"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            other => return Err(Error::ModelFormat(format!("unsupported version {other:?}"))),
        }
        let doc: ModelDocument<S> = serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
        doc.model.check()?;
        Ok(doc.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// Structural consistency of a deserialized model.
    fn check(&self) -> Result<()> {
        let (tasks, lambda, kernels) = match self {
            AnyModel::Mtl(m) => (&m.tasks, &m.lambda, vec![m.kernel]),
            AnyModel::Mkl(m) => {
                if m.theta.len() != m.kernels.len() || m.kernels.is_empty() {
                    return Err(Error::ModelFormat("theta and kernel list lengths differ".into()));
                }
                (&m.tasks, &m.lambda, m.kernels.clone())
            }
        };
        for k in &kernels {
            k.validate().map_err(|e| Error::ModelFormat(e.to_string()))?;
        }
        if lambda.len() != tasks.len() || tasks.is_empty() {
            return Err(Error::ModelFormat("lambda length differs from task count".into()));
        }
        for (t, tm) in tasks.iter().enumerate() {
            if tm.support.len() != tm.support_coef.len() {
                return Err(Error::ModelFormat(format!("task {t}: support vectors and coefficients differ")));
            }
            let dim = tm.support.first().map(Vec::len);
            if tm.support.iter().any(|x| Some(x.len()) != dim) {
                return Err(Error::ModelFormat(format!("task {t}: ragged support vectors")));
            }
            let finite = tm.b.is_finite()
                && tm.scale.is_finite()
                && tm.support_coef.iter().all(|v| v.is_finite())
                && tm.support.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(Error::ModelFormat(format!("task {t}: non-finite values")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;

    #[test]
    fn small_s_lambda_step_matches_example() {
        let l: Vec<f64> = lambda_step_small_s(&[1.0, 2.0], Exponent::ONE).unwrap();
        assert!((l[0] - 1.0 / 3.0).abs() < 1e-12 && (l[1] - 2.0 / 3.0).abs() < 1e-12);
        // λ_t ∝ ‖w_t‖^{2−s}
        let s = Exponent::new(1.5).unwrap();
        let w = [0.5, 1.0, 3.0];
        let l = lambda_step_small_s(&w, s).unwrap();
        let den = w.iter().map(|x: &f64| x.powf(1.5)).sum::<f64>().powf(0.5 / 1.5);
        for (li, wi) in l.iter().zip(&w) {
            assert!((li - wi.powf(0.5) / den).abs() < 1e-12);
        }
    }

    #[test]
    fn large_s_lambda_step_is_holder() {
        let l: Vec<f64> = lambda_step_large_s(&[3.0, 4.0], Exponent::new(4.0).unwrap()).unwrap();
        assert!((l[0] - 0.6).abs() < 1e-15 && (l[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn regularizer_special_cases() {
        assert!((coupled_regularizer(&[2.0, 4.0], Exponent::TWO) - 3.0).abs() < 1e-12);
        assert!((coupled_regularizer(&[2.0, 4.0], Exponent::Infinity) - 2.0).abs() < 1e-12);
        // s = 1: (Σ √(w²/2))²
        let v = coupled_regularizer(&[2.0, 8.0], Exponent::ONE);
        assert!((v - 9.0).abs() < 1e-12);
    }

    fn two_point_task(name: &str, gap: f64) -> Task<f64> {
        Task { name: name.into(), features: vec![vec![-gap], vec![gap]], labels: vec![-1, 1] }
    }

    #[test]
    fn symmetric_two_point_task_has_zero_offset() {
        let data = MultiTaskDataset::new(vec![two_point_task("a", 1.0)]).unwrap();
        let m = train_small_s(&data, &KernelSpec::linear(), Exponent::TWO, 10.0, &TrainOptions::default()).unwrap();
        assert!(m.tasks[0].b.abs() < 1e-9);
        assert!(predict(&m, &[0.0], 0).unwrap().abs() < 1e-9);
        assert!((predict(&m, &[1.0], 0).unwrap() - 1.0).abs() < 1e-6);
        assert!(matches!(predict(&m, &[0.0], 3), Err(Error::InvalidTask { index: 3, tasks: 1 })));
    }

    #[test]
    fn degenerate_task_is_constant() {
        let data = MultiTaskDataset::new(vec![
            two_point_task("a", 1.0),
            Task { name: "b".into(), features: vec![vec![0.3], vec![0.4]], labels: vec![-1, -1] },
        ])
        .unwrap();
        for s in [1.0, 2.0, 4.0] {
            let m = train_mtl(&data, &KernelSpec::linear(), Exponent::new(s).unwrap(), 1.0, &TrainOptions::default()).unwrap();
            assert_eq!(m.diagnostics.degenerate_tasks, vec![1]);
            assert_eq!(predict(&m, &[5.0], 1).unwrap(), -1.0);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let data = MultiTaskDataset::new(vec![two_point_task("a", 1.0), two_point_task("b", 2.0)]).unwrap();
        let m = train_small_s(&data, &KernelSpec::gaussian(1.0), Exponent::ONE, 1.0, &TrainOptions::default()).unwrap();
        let any = AnyModel::Mtl(m);
        let mut buf = Vec::new();
        any.to_writer(&mut buf).unwrap();
        let back = AnyModel::<f64>::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, any);
        assert!(matches!(AnyModel::<f64>::from_reader(&buf[..buf.len() / 2]), Err(Error::ModelFormat(_))));
    }
}
