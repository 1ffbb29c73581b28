//! Empirical Rademacher complexity of the lp-coupled hypothesis spaces.
//!
//! For a fixed kernel the complexity has the closed form
//! `(2/(TN))·√R·E_σ ‖u‖_{s*}` with `u_t = √(σ_t' K_t σ_t)`; with learned
//! kernel weights `θ` on the `lr` ball each sample needs the concave
//! maximisation `max_θ Σ_t (θ'u_t)^{s*/2}` where `u_t^m = σ_t' K_t^m σ_t`.
//! Both are estimated by Monte Carlo over Rademacher sign vectors.
//!
//! All logarithms are natural.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::data::stream_rng;
use crate::error::{Error, Result};
use crate::kernels::{check_bound_assumption, GramStack};
use crate::norms::{holder_maximizer, lp_norm, project_lr_ball, uniform_ball_point, Exponent};
use crate::scalar::{dot, Real};

/// Iteration cap of the θ-subproblem ascent.
pub const THETA_MAX_ITERS: usize = 500;
/// Relative-improvement stop of the θ-subproblem ascent.
pub const THETA_REL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErcParams {
    pub s: Exponent,
    /// Kernel-weight norm; `None` for a fixed single kernel.
    #[serde(default)]
    pub r: Option<Exponent>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub num_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_radius() -> f64 {
    1.0
}

impl ErcParams {
    pub fn single(s: Exponent, num_samples: usize, seed: u64) -> Self {
        Self { s, r: None, radius: 1.0, num_samples, seed }
    }

    pub fn multi(s: Exponent, r: Exponent, num_samples: usize, seed: u64) -> Self {
        Self { s, r: Some(r), radius: 1.0, num_samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {}", self.radius)));
        }
        if self.num_samples == 0 {
            return Err(Error::InvalidParameter("need at least one Monte Carlo sample".into()));
        }
        Ok(())
    }
}

/// Which closed form produced a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// Fixed kernel, finite `s`.
    SingleKernel,
    /// Fixed kernel, `s = ∞`: `2√(R/N)`.
    EqualRadius,
    /// Learned kernel, `r* ≤ ln T`.
    MklSmallRstar,
    /// Learned kernel, `r* ≥ ln MT`.
    MklLargeRstar,
    /// Learned kernel, general form valid for every `r`.
    MklGeneral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEval {
    pub value: f64,
    pub branch: BoundBranch,
    pub tau: f64,
    pub rho: Option<f64>,
    /// `k(x, x) ≤ 1` held; otherwise `value` is diagnostic only.
    pub assumption_ok: bool,
}

/// Bound column as emitted: a number, or the marker string when the
/// `k(x,x) ≤ 1` precondition failed.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundStatus {
    Valid(f64),
    AssumptionViolated,
    Unavailable,
}

impl BoundStatus {
    pub fn as_text(&self) -> String {
        match self {
            BoundStatus::Valid(v) => format_f64(*v),
            BoundStatus::AssumptionViolated => "assumption-violated".into(),
            BoundStatus::Unavailable => "unavailable".into(),
        }
    }
}

impl Serialize for BoundStatus {
    fn serialize<Z: Serializer>(&self, s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        match self {
            BoundStatus::Valid(v) if v.is_finite() => s.serialize_f64(*v),
            BoundStatus::Valid(_) => s.serialize_str("inf"),
            BoundStatus::AssumptionViolated => s.serialize_str("assumption-violated"),
            BoundStatus::Unavailable => s.serialize_none(),
        }
    }
}

/// Shortest round-tripping decimal, `inf` for infinity.
pub fn format_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErcReport {
    pub estimate: f64,
    pub std_error: f64,
    pub bound: BoundStatus,
    /// Numeric bound even when the assumption failed.
    pub bound_value: Option<f64>,
    pub branch: Option<BoundBranch>,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub s: Exponent,
    pub r: Option<Exponent>,
    #[serde(rename = "T")]
    pub tasks: usize,
    #[serde(rename = "N")]
    pub per_task: usize,
    #[serde(rename = "M")]
    pub kernels: usize,
    #[serde(rename = "D")]
    pub samples: usize,
    pub seed: u64,
    /// Samples dropped because the θ-ascent hit its iteration cap.
    pub excluded_samples: usize,
    /// Unscaled per-sample values (`‖u‖_{s*}` or its multi-kernel analogue).
    #[serde(skip)]
    pub per_sample: Vec<f64>,
}

/// Rademacher sign vectors for one Monte Carlo sample. Each task draws from
/// its own ChaCha stream keyed by `(seed, sample_index, task)`, so results do
/// not depend on evaluation order.
pub fn sample_sigma(task_sizes: &[usize], seed: u64, sample_index: u64) -> Vec<Vec<i8>> {
    task_sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let mut rng = stream_rng(seed, sample_index, t as u64);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let bits = rng.next_u64();
                for b in 0..64 {
                    if out.len() == n {
                        break;
                    }
                    out.push(if (bits >> b) & 1 == 1 { 1 } else { -1 });
                }
            }
            out
        })
        .collect()
}

fn common_size<S: Real>(g: &GramStack<S>) -> Result<usize> {
    g.equal_task_size().ok_or_else(|| {
        Error::InvalidDataset(format!(
            "complexity estimator needs equal task sizes, got {:?}; subsample to the minimum first",
            g.task_sizes
        ))
    })
}

/// `u_t = √max(0, σ_t'K_tσ_t)` for every sample (fixed kernel 0).
pub fn single_kernel_radii<S: Real>(g: &GramStack<S>, seed: u64, samples: usize) -> Vec<Vec<S>> {
    (0..samples)
        .into_par_iter()
        .map(|d| {
            let sigma = sample_sigma(&g.task_sizes, seed, d as u64);
            g.mats
                .iter()
                .zip(&sigma)
                .map(|(row, sg)| row[0].sign_quad_form(sg).max(S::zero()).sqrt())
                .collect()
        })
        .collect()
}

/// `u_t^m = max(0, σ_t'K_t^mσ_t)` for every sample, shaped `[sample][task][kernel]`.
pub fn multi_kernel_quads<S: Real>(g: &GramStack<S>, seed: u64, samples: usize) -> Vec<Vec<Vec<S>>> {
    (0..samples)
        .into_par_iter()
        .map(|d| {
            let sigma = sample_sigma(&g.task_sizes, seed, d as u64);
            g.mats
                .iter()
                .zip(&sigma)
                .map(|(row, sg)| row.iter().map(|k| k.sign_quad_form(sg).max(S::zero())).collect())
                .collect()
        })
        .collect()
}

/// ERC of the fixed-kernel space for one `s`.
pub fn erc_single_kernel<S: Real>(g: &GramStack<S>, p: &ErcParams) -> Result<ErcReport> {
    let mut reports = erc_single_kernel_grid(g, &[p.s], p)?;
    Ok(reports.remove(0))
}

/// ERC over an `s` grid with common random numbers: every `s` reuses the
/// same `σ` samples. `p.s` is ignored in favour of `s_grid`.
pub fn erc_single_kernel_grid<S: Real>(g: &GramStack<S>, s_grid: &[Exponent], p: &ErcParams) -> Result<Vec<ErcReport>> {
    p.validate()?;
    if g.num_kernels() != 1 {
        return Err(Error::InvalidParameter(format!("single-kernel estimator got {} kernels", g.num_kernels())));
    }
    let n = common_size(g)?;
    let radii = single_kernel_radii(g, p.seed, p.num_samples);
    let assumption = check_bound_assumption(g);
    let t = g.num_tasks();
    s_grid
        .iter()
        .map(|&s| {
            let values: Vec<f64> = radii.iter().map(|u| lp_norm(u, s.dual()).as_f64()).collect();
            let params = ErcParams { s, r: None, ..p.clone() };
            Ok(assemble(values, 0, &params, t, n, 1, assumption))
        })
        .collect()
}

/// ERC of the learned-kernel space (requires `s ≥ 2`, where the θ-problem
/// is concave).
pub fn erc_multi_kernel<S: Real>(g: &GramStack<S>, p: &ErcParams) -> Result<ErcReport> {
    let mut reports = erc_multi_kernel_grid(g, &[p.s], p)?;
    Ok(reports.remove(0))
}

pub fn erc_multi_kernel_grid<S: Real>(g: &GramStack<S>, s_grid: &[Exponent], p: &ErcParams) -> Result<Vec<ErcReport>> {
    p.validate()?;
    let r = p.r.ok_or_else(|| Error::InvalidParameter("multi-kernel estimator needs r".into()))?;
    for s in s_grid {
        if s.value() < 2.0 {
            return Err(Error::UnsupportedExponent(format!(
                "learned-kernel complexity needs s >= 2 (got s = {s}); the bound is still available"
            )));
        }
    }
    let n = common_size(g)?;
    let quads = multi_kernel_quads(g, p.seed, p.num_samples);
    let assumption = check_bound_assumption(g);
    let (t, m) = (g.num_tasks(), g.num_kernels());
    s_grid
        .iter()
        .map(|&s| {
            let solved: Vec<ThetaSolution<S>> = quads.par_iter().map(|u| maximize_theta(u, s, r)).collect();
            let excluded = solved.iter().filter(|x| !x.converged).count();
            if excluded > 0 {
                log::warn!("{excluded} of {} samples did not converge at s = {s}; excluded", solved.len());
            }
            let values: Vec<f64> = solved.iter().filter(|x| x.converged).map(|x| x.sample_value.as_f64()).collect();
            if values.is_empty() {
                return Err(Error::Numeric("no Monte Carlo sample converged".into()));
            }
            let params = ErcParams { s, r: Some(r), ..p.clone() };
            Ok(assemble(values, excluded, &params, t, n, m, assumption))
        })
        .collect()
}

fn assemble(values: Vec<f64>, excluded: usize, p: &ErcParams, t: usize, n: usize, m: usize, assumption: bool) -> ErcReport {
    let scale = 2.0 * p.radius.sqrt() / (t as f64 * n as f64);
    let d = values.len() as f64;
    let mean = values.iter().sum::<f64>() / d;
    // shifted by the first value, so identical samples give exactly zero
    let var = if values.len() > 1 {
        let shift = values[0];
        let (s1, s2) = values.iter().fold((0.0, 0.0), |(a, b), v| (a + (v - shift), b + (v - shift).powi(2)));
        ((s2 - s1 * s1 / d) / (d - 1.0)).max(0.0)
    } else {
        0.0
    };
    let bound = erc_bound(t, n, m, p, assumption);
    let (status, bound_value, branch, tau, rho) = match &bound {
        Ok(b) => (
            if b.assumption_ok { BoundStatus::Valid(b.value) } else { BoundStatus::AssumptionViolated },
            Some(b.value),
            Some(b.branch),
            Some(b.tau),
            b.rho,
        ),
        Err(_) => (BoundStatus::Unavailable, None, None, None, None),
    };
    ErcReport {
        estimate: scale * mean,
        std_error: scale * (var / d).sqrt(),
        bound: status,
        bound_value,
        branch,
        tau,
        rho,
        s: p.s,
        r: p.r,
        tasks: t,
        per_task: n,
        kernels: m,
        samples: p.num_samples,
        seed: p.seed,
        excluded_samples: excluded,
        per_sample: values,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSolution<S: Real> {
    pub theta: Vec<S>,
    /// `max_θ Σ_t (θ'u_t)^{s*/2}`.
    pub value: S,
    /// `value^{1/s*}`, the per-sample complexity term.
    pub sample_value: S,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `max Σ_t (θ'u_t)^{s*/2}` over `{θ ⪰ 0, ‖θ‖_r ≤ 1}` for `s ≥ 2`.
///
/// `s = 2` is linear in θ and handled by the Hölder maximizer; a single
/// kernel forces `θ = 1`. Otherwise projected gradient ascent with
/// backtracking from a unit step, stopping on relative improvement below
/// [`THETA_REL_TOL`] or a Frank–Wolfe gap certificate of the same size.
pub fn maximize_theta<S: Real>(u: &[Vec<S>], s: Exponent, r: Exponent) -> ThetaSolution<S> {
    let m = u.first().map_or(0, Vec::len);
    let ss = s.dual();
    let inv_ss = S::lit(ss.reciprocal());
    let a = S::lit(0.5 * ss.value());
    let finish = |theta: Vec<S>, value: S, iterations, converged| ThetaSolution {
        sample_value: value.max(S::zero()).powf(inv_ss),
        theta,
        value,
        iterations,
        converged,
    };
    let objective = |theta: &[S]| -> S { u.iter().map(|ut| dot(theta, ut).max(S::zero()).powf(a)).sum() };

    if m == 1 {
        let theta = vec![S::one()];
        let v = objective(&theta);
        return finish(theta, v, 0, true);
    }
    if a == S::one() {
        let mut total = vec![S::zero(); m];
        for ut in u {
            for (acc, &x) in total.iter_mut().zip(ut) {
                *acc = *acc + x;
            }
        }
        if total.iter().all(|&x| x == S::zero()) {
            return finish(uniform_ball_point(m, r), S::zero(), 0, true);
        }
        let theta = holder_maximizer(&total, r).expect("nonzero nonnegative vector");
        let v = lp_norm(&total, r.dual());
        return finish(theta, v, 0, true);
    }

    let gradient = |theta: &[S]| -> Vec<S> {
        let mut g = vec![S::zero(); m];
        for ut in u {
            let peak = ut.iter().fold(S::zero(), |acc, &x| acc.max(x));
            if peak == S::zero() {
                continue;
            }
            let inner = dot(theta, ut).max(peak * S::lit(1e-12));
            let coef = a * inner.powf(a - S::one());
            for (gm, &x) in g.iter_mut().zip(ut) {
                *gm = *gm + coef * x;
            }
        }
        g
    };

    let mut theta: Vec<S> = uniform_ball_point(m, r);
    let mut value = objective(&theta);
    let rel = S::lit(THETA_REL_TOL);
    for it in 1..=THETA_MAX_ITERS {
        let g = gradient(&theta);
        let lin_now = dot(&g, &theta);
        let fw_gap = lp_norm(&g, r.dual()) - lin_now;
        if fw_gap <= rel * value.abs().max(S::min_positive_value()) {
            return finish(theta, value, it - 1, true);
        }
        let mut step = S::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<S> = theta.iter().zip(&g).map(|(&th, &gm)| th + step * gm).collect();
            let cand = project_lr_ball(&trial, r);
            let cand_val = objective(&cand);
            let moved: S = cand.iter().zip(&theta).zip(&g).map(|((&c, &th), &gm)| gm * (c - th)).sum();
            if cand_val >= value + S::lit(1e-4) * moved && cand_val >= value {
                accepted = Some((cand, cand_val));
                break;
            }
            step = step * S::lit(0.5);
        }
        let Some((cand, cand_val)) = accepted else {
            return finish(theta, value, it, true);
        };
        let improvement = cand_val - value;
        theta = cand;
        value = cand_val;
        if improvement <= rel * value.abs() {
            return finish(theta, value, it, true);
        }
    }
    finish(theta, value, THETA_MAX_ITERS, false)
}

/// Closed-form upper bound on the complexity.
///
/// Fixed kernel: `(2/(T√N))·√(τ R T^{2/s*})` with `ρ = 2 ln T` and
/// `τ = (max{s, ρ*})*`. Learned kernel: the `r* ≤ ln T` refinement
/// (`M^{1/r*}`), the `r* ≥ ln MT` refinement (`ρ = 2 ln MT`, `M^{2/τ}`), or in
/// between the general `√(R s* T^{2/s*} M^{max{1/r*, 2/s*}})` form.
pub fn erc_bound(t: usize, n: usize, m: usize, p: &ErcParams, assumption_ok: bool) -> Result<BoundEval> {
    if t == 0 || n == 0 || m == 0 {
        return Err(Error::InvalidParameter("T, N and M must be positive".into()));
    }
    let (tf, nf, mf) = (t as f64, n as f64, m as f64);
    let prefactor = 2.0 / (tf * nf.sqrt());
    let ss = p.s.dual();
    let t_pow = tf.powf(2.0 * ss.reciprocal());
    let radius = p.radius;

    let tau_for = |rho: f64| -> Result<f64> {
        if rho < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "ρ = {rho:.4} < 1 has no conjugate; need more tasks (T ≥ 2, or MT ≥ 2 with learned kernels)"
            )));
        }
        let rho_star = Exponent::new(rho)?.dual();
        Ok(p.s.max(rho_star).dual().value())
    };

    match p.r {
        None => {
            let rho = 2.0 * tf.ln();
            let tau = tau_for(rho)?;
            let value = prefactor * (tau * radius * t_pow).sqrt();
            let branch = if p.s.is_infinite() { BoundBranch::EqualRadius } else { BoundBranch::SingleKernel };
            Ok(BoundEval { value, branch, tau, rho: Some(rho), assumption_ok })
        }
        Some(r) => {
            let rs = r.dual();
            if rs.value() <= tf.ln() {
                let rho = 2.0 * tf.ln();
                let tau = tau_for(rho)?;
                let value = prefactor * (tau * radius * t_pow * mf.powf(rs.reciprocal())).sqrt();
                Ok(BoundEval { value, branch: BoundBranch::MklSmallRstar, tau, rho: Some(rho), assumption_ok })
            } else if rs.value() >= (mf * tf).ln() {
                let rho = 2.0 * (mf * tf).ln();
                let tau = tau_for(rho)?;
                let value = prefactor * (tau * radius * t_pow * mf.powf(2.0 / tau)).sqrt();
                Ok(BoundEval { value, branch: BoundBranch::MklLargeRstar, tau, rho: Some(rho), assumption_ok })
            } else {
                let coef = ss.value();
                let m_pow = mf.powf(rs.reciprocal().max(2.0 * ss.reciprocal()));
                let value = prefactor * (radius * coef * t_pow * m_pow).sqrt();
                Ok(BoundEval { value, branch: BoundBranch::MklGeneral, tau: coef, rho: None, assumption_ok })
            }
        }
    }
}

/// `min(1, max(0, 1 − m))`: bounded, 1-Lipschitz, dominates the 0/1 loss.
pub fn ramp_loss(margin: f64) -> f64 {
    (1.0 - margin).clamp(0.0, 1.0)
}

/// Mean ramp loss over all `(task, sample)` margins `y·f(x)`.
pub fn empirical_ramp_error(margins: &[Vec<f64>]) -> f64 {
    let count: usize = margins.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    margins.iter().flatten().map(|&m| ramp_loss(m)).sum::<f64>() / count as f64
}

/// `êr + erc/γ + √(9 ln(2/δ) / (2TN))`, holding with probability `1 − δ`.
pub fn generalization_bound(empirical_error: f64, erc: f64, gamma: f64, delta: f64, t: usize, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&empirical_error) {
        return Err(Error::InvalidParameter("empirical error must lie in [0, 1]".into()));
    }
    if !(gamma > 0.0) || !(delta > 0.0 && delta < 1.0) || t == 0 || n == 0 {
        return Err(Error::InvalidParameter("need γ > 0, δ ∈ (0, 1), T, N ≥ 1".into()));
    }
    let slack = (9.0 * (2.0 / delta).ln() / (2.0 * t as f64 * n as f64)).sqrt();
    Ok(empirical_error + erc / gamma + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SquareMatrix;

    fn identity_stack(t: usize, n: usize, m: usize) -> GramStack<f64> {
        GramStack::from_matrices(vec![vec![SquareMatrix::identity(n); m]; t]).unwrap()
    }

    fn exp(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    #[test]
    fn sigma_is_deterministic_and_balanced() {
        let a = sample_sigma(&[5, 70], 42, 3);
        assert_eq!(a, sample_sigma(&[5, 70], 42, 3));
        assert_ne!(a, sample_sigma(&[5, 70], 42, 4));
        assert!(a.iter().flatten().all(|&x| x == 1 || x == -1));
        let big = sample_sigma(&[100_000], 7, 0);
        let mean = big[0].iter().map(|&x| x as f64).sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn identity_gram_closed_forms() {
        let g = identity_stack(2, 4, 1);
        let cases = [(1.0, 0.5), (2.0, 2.0 * 8f64.sqrt() / 8.0), (f64::INFINITY, 1.0)];
        for (s, want) in cases {
            let rep = erc_single_kernel(&g, &ErcParams::single(exp(s), 50, 1)).unwrap();
            assert!((rep.estimate - want).abs() < 1e-12, "s={s}: {}", rep.estimate);
            assert!(rep.std_error < 1e-12);
        }
    }

    #[test]
    fn unequal_sizes_rejected() {
        let g = GramStack::from_matrices(vec![vec![SquareMatrix::<f64>::identity(3)], vec![SquareMatrix::identity(4)]]).unwrap();
        assert!(matches!(erc_single_kernel(&g, &ErcParams::single(Exponent::TWO, 3, 0)), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn multi_kernel_identity_closed_form() {
        let g = identity_stack(2, 4, 3);
        let rep = erc_multi_kernel(&g, &ErcParams::multi(Exponent::TWO, Exponent::ONE, 20, 3)).unwrap();
        assert!((rep.estimate - 8f64.sqrt() / 4.0).abs() < 1e-12);
        assert!(rep.std_error < 1e-12);
        assert!(matches!(
            erc_multi_kernel(&g, &ErcParams::multi(exp(1.5), Exponent::ONE, 20, 3)),
            Err(Error::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn bound_arithmetic() {
        let p = ErcParams::single(Exponent::ONE, 1, 0);
        let b = erc_bound(2, 4, 1, &p, true).unwrap();
        let rho = 2.0 * 2f64.ln();
        assert!((b.tau - rho).abs() < 1e-12);
        assert!((b.value - 0.5 * rho.sqrt()).abs() < 1e-12);
        assert!((b.value - 0.58870).abs() < 1e-5);
        // s = 1 closed form (2/(T√N))·√(2R ln T)
        for (t, n) in [(2usize, 4usize), (8, 100), (45, 10)] {
            let b = erc_bound(t, n, 1, &p, true).unwrap();
            let want = 2.0 / (t as f64 * (n as f64).sqrt()) * (2.0 * (t as f64).ln()).sqrt();
            assert!((b.value - want).abs() < 1e-12 * want);
        }
        // s = ρ*: (2/(T√N))·√(2eR ln T)
        let t = 8usize;
        let rho = 2.0 * (t as f64).ln();
        let s = Exponent::new(rho).unwrap().dual();
        let b = erc_bound(t, 9, 1, &ErcParams::single(s, 1, 0), true).unwrap();
        let want = 2.0 / (8.0 * 3.0) * (2.0 * std::f64::consts::E * (t as f64).ln()).sqrt();
        assert!((b.value - want).abs() < 1e-12);
        assert!(erc_bound(1, 4, 1, &p, true).is_err());
    }

    #[test]
    fn bound_branches_for_learned_kernels() {
        let r1 = ErcParams::multi(Exponent::TWO, Exponent::ONE, 1, 0);
        assert_eq!(erc_bound(8, 50, 9, &r1, true).unwrap().branch, BoundBranch::MklLargeRstar);
        // r* = 2 ≤ ln 8
        let r2 = ErcParams::multi(Exponent::TWO, Exponent::TWO, 1, 0);
        assert_eq!(erc_bound(8, 50, 9, &r2, true).unwrap().branch, BoundBranch::MklSmallRstar);
        // ln 3 < r* = 2 < ln 27
        assert_eq!(erc_bound(3, 50, 9, &r2, true).unwrap().branch, BoundBranch::MklGeneral);
    }

    #[test]
    fn generalization_bound_examples() {
        let v = generalization_bound(0.1, 0.2, 1.0, 0.05, 2, 4).unwrap();
        assert!((v - 1.74049).abs() < 1e-5);
        // δ → 1 leaves the confidence term at √(9 ln 2 / (2TN))
        let limit = generalization_bound(0.0, 0.0, 1.0, 1.0 - 1e-12, 2, 4).unwrap();
        assert!((limit - (9.0 * 2f64.ln() / 16.0).sqrt()).abs() < 1e-9);
        let a = generalization_bound(0.0, 0.0, 1.0, 0.1, 2, 4).unwrap();
        let b = generalization_bound(0.0, 0.0, 1.0, 0.1, 4, 4).unwrap();
        assert!((b / a - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(ramp_loss(2.0), 0.0);
        assert_eq!(ramp_loss(-3.0), 1.0);
        assert_eq!(ramp_loss(0.25), 0.75);
    }

    #[test]
    fn theta_ascent_single_kernel_wrap() {
        let u = vec![vec![3.0], vec![5.0]];
        let sol = maximize_theta(&u, exp(4.0), Exponent::TWO);
        let direct = lp_norm(&[3f64.sqrt(), 5f64.sqrt()], exp(4.0).dual());
        assert!((sol.sample_value - direct).abs() < 1e-12);
    }
}
