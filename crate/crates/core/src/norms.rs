//! lp-norm machinery: conjugate exponents, norms, Hölder maximizers and
//! Euclidean projection onto the nonnegative part of an lr ball.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A norm exponent in `[1, +∞]`. Infinity is its own variant so that
/// conjugates like `1* = ∞` stay exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub const ONE: Exponent = Exponent::Finite(1.0);
    pub const TWO: Exponent = Exponent::Finite(2.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(Error::InvalidExponent(value));
        }
        if value.is_infinite() {
            Ok(Exponent::Infinity)
        } else {
            Ok(Exponent::Finite(value))
        }
    }

    /// Value as `f64`, with `f64::INFINITY` for the infinite variant.
    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(v) => v,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    pub fn is_one(self) -> bool {
        self == Exponent::ONE
    }

    /// The conjugate exponent `a* = a/(a-1)`, with `1* = ∞` and `∞* = 1`.
    pub fn dual(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::ONE,
            Exponent::Finite(v) if v == 1.0 => Exponent::Infinity,
            Exponent::Finite(v) => Exponent::Finite(v / (v - 1.0)),
        }
    }

    /// `1/a`, zero for infinity.
    pub fn reciprocal(self) -> f64 {
        match self {
            Exponent::Finite(v) => 1.0 / v,
            Exponent::Infinity => 0.0,
        }
    }

    pub fn max(self, other: Exponent) -> Exponent {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }
}

/// Conjugate of a raw exponent value; errors when `a < 1`.
pub fn dual_exponent(a: f64) -> Result<Exponent> {
    Exponent::new(a).map(Exponent::dual)
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    /// Accepts decimals, fractions like `4/3`, and `inf`/`infinity`/`∞`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" | "∞" => return Ok(Exponent::Infinity),
            _ => {}
        }
        let bad = || Error::InvalidParameter(format!("cannot parse exponent {s:?}"));
        let value = if let Some((num, den)) = t.split_once('/') {
            let n: f64 = num.trim().parse().map_err(|_| bad())?;
            let d: f64 = den.trim().parse().map_err(|_| bad())?;
            n / d
        } else {
            t.parse().map_err(|_| bad())?
        };
        Exponent::new(value)
    }
}

impl Serialize for Exponent {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        match self {
            Exponent::Finite(v) => serializer.serialize_f64(*v),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Exponent::new(v),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// `‖v‖_p` of a nonnegative vector (absolute values are taken, so signed
/// input is fine). Computed with max-scaling to avoid overflow for large `p`.
pub fn lp_norm<S: Real>(v: &[S], p: Exponent) -> S {
    let peak = v.iter().fold(S::zero(), |m, x| m.max(x.abs()));
    if peak == S::zero() {
        return S::zero();
    }
    match p {
        Exponent::Infinity => peak,
        Exponent::Finite(e) if e == 1.0 => v.iter().map(|x| x.abs()).sum(),
        Exponent::Finite(e) => {
            let e = S::lit(e);
            let acc: S = v.iter().map(|x| (x.abs() / peak).powf(e)).sum();
            peak * acc.powf(e.recip())
        }
    }
}

/// Maximizes `g'λ` over `{λ ⪰ 0, ‖λ‖_q ≤ 1}` for `g ⪰ 0`, `g ≠ 0`.
///
/// The optimum value is `‖g‖_{q*}`. For `q = 1` all mass goes to the first
/// maximal coordinate; for `q = ∞` the maximizer is the all-ones vector.
pub fn holder_maximizer<S: Real>(g: &[S], q: Exponent) -> Result<Vec<S>> {
    if g.iter().any(|x| *x < S::zero() || x.is_nan()) {
        return Err(Error::InvalidParameter("Hölder maximizer needs g ⪰ 0".into()));
    }
    if g.iter().all(|x| *x == S::zero()) {
        return Err(Error::ZeroVector);
    }
    Ok(match q {
        Exponent::Infinity => vec![S::one(); g.len()],
        Exponent::Finite(v) if v == 1.0 => {
            let mut best = 0;
            for (i, x) in g.iter().enumerate() {
                if *x > g[best] {
                    best = i;
                }
            }
            let mut out = vec![S::zero(); g.len()];
            out[best] = S::one();
            out
        }
        Exponent::Finite(_) => {
            let qs = q.dual();
            let norm = lp_norm(g, qs);
            // λ_i = (g_i / ‖g‖_{q*})^{q*-1}, and (q*-1) = 1/(q-1)
            let power = S::lit(1.0 / (q.value() - 1.0));
            g.iter().map(|x| (*x / norm).powf(power)).collect()
        }
    })
}

/// Closed-form minimizer of `Σ_t a_t / λ_t` over `{λ ⪰ 0, ‖λ‖_p ≤ 1}`.
///
/// Stationarity gives `λ_t ∝ a_t^{1/(p+1)}` with the norm constraint active.
/// Zero weights produce zero entries; an all-zero `a` yields the uniform
/// feasible point `T^{-1/p}`.
pub fn reciprocal_minimizer<S: Real>(a: &[S], p: Exponent) -> Vec<S> {
    let t = a.len();
    if p.is_infinite() {
        return vec![S::one(); t];
    }
    let pv = p.value();
    let peak = a.iter().fold(S::zero(), |m, x| m.max(*x));
    if peak == S::zero() {
        return vec![S::lit((t as f64).powf(-1.0 / pv)); t];
    }
    let raw: Vec<S> = a
        .iter()
        .map(|x| (x.max(S::zero()) / peak).powf(S::lit(1.0 / (pv + 1.0))))
        .collect();
    let norm = lp_norm(&raw, p);
    raw.into_iter().map(|x| x / norm).collect()
}

/// The symmetric feasible starting point `n^{-1/p} · 1` of the unit `p` ball.
pub fn uniform_ball_point<S: Real>(n: usize, p: Exponent) -> Vec<S> {
    vec![S::lit((n as f64).powf(-p.reciprocal())); n]
}

/// Clamps entries below `floor` up to it, then rescales back into the unit
/// `p` ball when the floor pushed the norm over 1.
pub fn floor_into_ball<S: Real>(v: &mut [S], floor: S, p: Exponent) {
    for x in v.iter_mut() {
        if *x < floor {
            *x = floor;
        }
    }
    let norm = lp_norm(v, p);
    if norm > S::one() {
        for x in v.iter_mut() {
            *x = *x / norm;
        }
    }
}

/// Euclidean projection of `v` onto `{θ ⪰ 0, ‖θ‖_r ≤ 1}`.
///
/// Exact sort-based algorithm for `r = 1`, radial rescale for `r = 2`, box
/// clipping for `r = ∞`, and a bisection on the KKT multiplier otherwise.
pub fn project_lr_ball<S: Real>(v: &[S], r: Exponent) -> Vec<S> {
    let pos: Vec<S> = v.iter().map(|x| x.max(S::zero())).collect();
    if pos.len() == 1 {
        return vec![pos[0].min(S::one())];
    }
    if lp_norm(&pos, r) <= S::one() {
        return pos;
    }
    match r {
        Exponent::Infinity => pos.into_iter().map(|x| x.min(S::one())).collect(),
        Exponent::Finite(e) if e == 1.0 => project_simplex(&pos),
        Exponent::Finite(e) if e == 2.0 => {
            let n = lp_norm(&pos, r);
            pos.into_iter().map(|x| x / n).collect()
        }
        Exponent::Finite(e) => project_lr_bisection(&pos, e),
    }
}

/// Projection of a nonnegative vector onto the probability simplex
/// (the `l1` sphere part of the ball, used once the point is outside).
fn project_simplex<S: Real>(v: &[S]) -> Vec<S> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = S::zero();
    let mut shift = S::zero();
    for (k, &x) in sorted.iter().enumerate() {
        cumsum = cumsum + x;
        let candidate = (cumsum - S::one()) / S::from_usize_lossy(k + 1);
        if x - candidate > S::zero() {
            shift = candidate;
        }
    }
    v.iter().map(|&x| (x - shift).max(S::zero())).collect()
}

/// KKT: `θ_i + μ r θ_i^{r-1} = v_i`, with `μ` chosen so `Σ θ_i^r = 1`.
fn project_lr_bisection<S: Real>(v: &[S], r: f64) -> Vec<S> {
    let vf: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
    let theta_at = |mu: f64| -> Vec<f64> { vf.iter().map(|&vi| solve_coordinate(vi, mu, r)).collect() };
    let norm_r = |th: &[f64]| th.iter().map(|x| x.powf(r)).sum::<f64>();

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while norm_r(&theta_at(hi)) > 1.0 {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    // multiplier tolerance 1e-10 (relative for large multipliers)
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if norm_r(&theta_at(mid)) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let th = theta_at(hi);
    let n = norm_r(&th).powf(1.0 / r);
    th.into_iter()
        .map(|x| S::lit(if n > 1.0 { x / n } else { x }))
        .collect()
}

/// Solves `θ + μ r θ^{r-1} = v` for `θ ∈ [0, v]` (monotone in θ for r > 1).
fn solve_coordinate(v: f64, mu: f64, r: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if mu == 0.0 {
        return v;
    }
    let f = |t: f64| t + mu * r * t.powf(r - 1.0) - v;
    let (mut lo, mut hi) = (0.0_f64, v);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * v.max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}
