//! Kernel functions and per-task Gram stacks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultiTaskDataset;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{dot, sq_dist, Real};

/// Symmetry tolerance for built Gram matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative eigenvalue slack for the PSD check (`λ_min ≥ -tol · trace/N`).
pub const PSD_REL_TOL: f64 = 1e-8;
/// Slack on `k(x, x) ≤ 1` when gating the complexity bounds.
pub const DIAG_BOUND_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    /// `exp(-‖x - x'‖² / (2 spread²))`.
    Gaussian { spread: f64 },
    Linear,
    /// `(⟨x, x'⟩ + 1)^degree`.
    Polynomial { degree: u32 },
}

/// A kernel plus its normalisation flag. When `normalize` is unset the
/// caller's context decides (see [`KernelSpec::resolved`]).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
}

impl KernelSpec {
    pub fn gaussian(spread: f64) -> Self {
        Self { kind: KernelKind::Gaussian { spread }, normalize: None }
    }

    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, normalize: None }
    }

    pub fn polynomial(degree: u32) -> Self {
        Self { kind: KernelKind::Polynomial { degree }, normalize: None }
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize = Some(on);
        self
    }

    /// Pins an unset `normalize` flag. Bound computations want unit
    /// diagonals, so they pass `default_normalize = true`; training passes
    /// `false`.
    pub fn resolved(self, default_normalize: bool) -> Self {
        Self { kind: self.kind, normalize: Some(self.normalize.unwrap_or(default_normalize)) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Gaussian { spread } if !(spread > 0.0 && spread.is_finite()) => {
                Err(Error::InvalidKernel(format!("gaussian spread must be positive, got {spread}")))
            }
            KernelKind::Polynomial { degree } if degree == 0 => {
                Err(Error::InvalidKernel("polynomial degree must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn raw<S: Real>(&self, x: &[S], z: &[S]) -> S {
        match self.kind {
            KernelKind::Gaussian { spread } => {
                let denom = S::lit(2.0 * spread * spread);
                (-sq_dist(x, z) / denom).exp()
            }
            KernelKind::Linear => dot(x, z),
            KernelKind::Polynomial { degree } => (dot(x, z) + S::one()).powi(degree as i32),
        }
    }

    fn normalizes(&self) -> bool {
        // the gaussian diagonal is already exactly 1
        self.normalize.unwrap_or(false) && !matches!(self.kind, KernelKind::Gaussian { .. })
    }

    /// Kernel value `k(x, z)`, normalised if requested. A zero self-similarity
    /// normalises to 0 off the diagonal.
    pub fn eval<S: Real>(&self, x: &[S], z: &[S]) -> S {
        let v = self.raw(x, z);
        if !self.normalizes() {
            return v;
        }
        let denom = (self.raw(x, x) * self.raw(z, z)).sqrt();
        if denom > S::zero() {
            v / denom
        } else {
            S::zero()
        }
    }

    /// Gram matrix of one point set, symmetrised, with exact unit diagonal
    /// when normalised.
    pub fn gram<S: Real>(&self, xs: &[Vec<S>]) -> SquareMatrix<S> {
        let n = xs.len();
        let selfsim: Vec<S> = xs.iter().map(|x| self.raw(x, x)).collect();
        let normalize = self.normalizes();
        let mut k = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = if normalize {
                    if i == j {
                        S::one()
                    } else {
                        let d = (selfsim[i] * selfsim[j]).sqrt();
                        if d > S::zero() {
                            self.raw(&xs[i], &xs[j]) / d
                        } else {
                            S::zero()
                        }
                    }
                } else if i == j {
                    if matches!(self.kind, KernelKind::Gaussian { .. }) {
                        S::one()
                    } else {
                        selfsim[i]
                    }
                } else {
                    self.raw(&xs[i], &xs[j])
                };
                k.set(i, j, v);
                k.set(j, i, v);
            }
        }
        k
    }
}

/// Per-task, per-kernel Gram matrices `K_t^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramStack<S: Real> {
    /// `mats[t][m]` is the Gram of task `t` under kernel `m`.
    pub mats: Vec<Vec<SquareMatrix<S>>>,
    pub task_sizes: Vec<usize>,
    pub max_diag: S,
}

impl<S: Real> GramStack<S> {
    /// Validates shape, symmetry and PSD-ness of hand-built matrices.
    pub fn from_matrices(mats: Vec<Vec<SquareMatrix<S>>>) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::InvalidDataset("no tasks".into()));
        }
        let m = mats[0].len();
        if m == 0 || mats.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidKernel("every task needs the same nonzero number of kernels".into()));
        }
        let mut task_sizes = Vec::with_capacity(mats.len());
        let mut max_diag = S::neg_infinity();
        for (t, row) in mats.iter().enumerate() {
            let n = row[0].dim();
            if n == 0 {
                return Err(Error::InvalidDataset(format!("task {t} is empty")));
            }
            for (k, mat) in row.iter().enumerate() {
                if mat.dim() != n {
                    return Err(Error::InvalidKernel(format!("task {t}: kernel {k} has wrong dimension")));
                }
                check_matrix(mat, t, k)?;
                max_diag = mat.diag().fold(max_diag, S::max);
            }
            task_sizes.push(n);
        }
        Ok(Self { mats, task_sizes, max_diag })
    }

    pub fn num_tasks(&self) -> usize {
        self.mats.len()
    }

    pub fn num_kernels(&self) -> usize {
        self.mats.first().map_or(0, Vec::len)
    }

    pub fn equal_task_size(&self) -> Option<usize> {
        let n = *self.task_sizes.first()?;
        self.task_sizes.iter().all(|&m| m == n).then_some(n)
    }

    /// Every matrix multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Self {
        let mats: Vec<Vec<_>> = self.mats.iter().map(|row| row.iter().map(|k| k.scaled(factor)).collect()).collect();
        Self { mats, task_sizes: self.task_sizes.clone(), max_diag: self.max_diag * factor }
    }

    /// Composite Gram `Σ_m θ_m K_t^m` of one task.
    pub fn combined(&self, task: usize, theta: &[S]) -> SquareMatrix<S> {
        let refs: Vec<&SquareMatrix<S>> = self.mats[task].iter().collect();
        SquareMatrix::weighted_sum(theta, &refs)
    }
}

fn check_matrix<S: Real>(mat: &SquareMatrix<S>, task: usize, kernel: usize) -> Result<()> {
    if !mat.is_finite() {
        return Err(Error::Numeric(format!("task {task}, kernel {kernel}: non-finite Gram entry")));
    }
    if mat.max_asymmetry() > S::lit(SYMMETRY_TOL) {
        return Err(Error::Numeric(format!("task {task}, kernel {kernel}: Gram not symmetric")));
    }
    if !mat.is_psd(PSD_REL_TOL) {
        return Err(Error::Numeric(format!("task {task}, kernel {kernel}: Gram not positive semidefinite")));
    }
    Ok(())
}

/// Builds `K_t^m` for every task and kernel. Pairs are built in parallel.
pub fn build_gram<S: Real>(data: &MultiTaskDataset<S>, specs: &[KernelSpec]) -> Result<GramStack<S>> {
    if specs.is_empty() {
        return Err(Error::InvalidKernel("no kernels given".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    data.validate()?;
    let t = data.num_tasks();
    let m = specs.len();
    let cells: Vec<SquareMatrix<S>> = (0..t * m)
        .into_par_iter()
        .map(|cell| {
            let (task, k) = (cell / m, cell % m);
            let mut g = specs[k].gram(&data.tasks[task].features);
            g.symmetrize();
            g
        })
        .collect();
    let mut mats: Vec<Vec<SquareMatrix<S>>> = Vec::with_capacity(t);
    let mut it = cells.into_iter();
    for _ in 0..t {
        mats.push(it.by_ref().take(m).collect());
    }
    GramStack::from_matrices(mats)
}

/// The `k(x, x) ≤ 1` precondition of the complexity bounds.
pub fn check_bound_assumption<S: Real>(g: &GramStack<S>) -> bool {
    g.max_diag <= S::one() + S::lit(DIAG_BOUND_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_multitask, Task};

    fn single(xs: Vec<Vec<f64>>) -> MultiTaskDataset<f64> {
        let n = xs.len();
        MultiTaskDataset::new(vec![Task { name: "t".into(), features: xs, labels: vec![1; n] }]).unwrap()
    }

    #[test]
    fn gaussian_diagonal_is_one() {
        let ds: MultiTaskDataset<f64> = synth_multitask(2, 6, 3, 0.3, 0.0, 1).unwrap();
        for spread in [2f64.powi(-7), 1.0, 128.0] {
            let g = build_gram(&ds, &[KernelSpec::gaussian(spread)]).unwrap();
            for row in &g.mats {
                assert!(row[0].diag().all(|d| d == 1.0));
            }
            assert!(check_bound_assumption(&g));
        }
    }

    #[test]
    fn linear_normalised_self_similarity() {
        let spec = KernelSpec::linear().normalized(true);
        assert!((spec.eval(&[3.0_f64, 4.0], &[3.0, 4.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_unit_vectors_give_identity() {
        let ds = single(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = build_gram(&ds, &[KernelSpec::linear().normalized(false)]).unwrap();
        assert_eq!(g.mats[0][0], SquareMatrix::identity(2));
    }

    #[test]
    fn bound_assumption_gate() {
        let ds = single(vec![vec![3.0, 4.0]]);
        let g = build_gram(&ds, &[KernelSpec::linear().normalized(false)]).unwrap();
        assert_eq!(g.max_diag, 25.0);
        assert!(!check_bound_assumption(&g));
        assert!(check_bound_assumption(&g.scaled(1.0 / 25.0)));
    }

    #[test]
    fn invalid_specs_and_data() {
        assert!(KernelSpec::gaussian(0.0).validate().is_err());
        assert!(KernelSpec::polynomial(0).validate().is_err());
        let bad = MultiTaskDataset::<f64> { tasks: vec![Task { name: "e".into(), features: vec![], labels: vec![] }], feature_dim: 1 };
        assert!(matches!(build_gram(&bad, &[KernelSpec::linear()]), Err(Error::InvalidDataset(_))));
        let nan = MultiTaskDataset::<f64> {
            tasks: vec![Task { name: "n".into(), features: vec![vec![f64::NAN]], labels: vec![1] }],
            feature_dim: 1,
        };
        assert!(matches!(build_gram(&nan, &[KernelSpec::linear()]), Err(Error::Numeric(_))));
    }

    #[test]
    fn non_psd_rejected() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(GramStack::from_matrices(vec![vec![m]]), Err(Error::Numeric(_))));
    }

    #[test]
    fn spec_json_shape() {
        let spec: KernelSpec = serde_json::from_str(r#"{"kind":"gaussian","spread":128.0}"#).unwrap();
        assert_eq!(spec, KernelSpec::gaussian(128.0));
        let poly: KernelSpec = serde_json::from_str(r#"{"kind":"polynomial","degree":2,"normalize":true}"#).unwrap();
        assert_eq!(poly, KernelSpec::polynomial(2).normalized(true));
        assert_eq!(serde_json::to_string(&KernelSpec::linear()).unwrap(), r#"{"kind":"linear"}"#);
    }
}
