use lpmtl::qp::{dual_objective, margin_kkt_residual, solve_svm_dual, SolverOptions};
use lpmtl::{KernelSpec, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Projection onto `{0 ⪯ α ⪯ c, y'α = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(y).map(|(&vi, &yi)| (vi - nu * yi).clamp(0.0, c)).collect() };
    let resid = |nu: f64| -> f64 { at(nu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while resid(lo) < 0.0 {
        lo *= 2.0;
    }
    while resid(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resid(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on `½α'Qα − 1'α` with step `1/L`.
fn oracle(k: &SquareMatrix<f64>, y: &[i8], c: f64) -> f64 {
    let n = y.len();
    let ys: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let q = SquareMatrix::from_fn(n, |i, j| ys[i] * ys[j] * k.get(i, j));
    // power iteration for L
    let mut v = vec![1.0; n];
    let mut l = 1.0;
    for _ in 0..500 {
        let w = q.mul_vec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        l = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    let l = 1.05 * l.max(1e-12);
    let f = |a: &[f64]| 0.5 * q.quad_form(a) - a.iter().sum::<f64>();
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let g = q.mul_vec(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - (gi - 1.0) / l).collect();
        let x_new = project(&step, &ys, c);
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mut momentum = (t - 1.0) / t_new;
        // adaptive restart keeps the sequence monotone
        if f(&x_new) > f(&x) {
            momentum = 0.0;
            t = 1.0;
        } else {
            t = t_new;
        }
        let moved: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = x_new.iter().zip(&x).map(|(a, b)| a + momentum * (a - b)).collect();
        x = x_new;
        if moved < 1e-13 {
            break;
        }
    }
    -f(&x)
}

#[test]
fn smo_matches_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for inst in 0..50 {
        let n = rng.random_range(2..=20);
        let d = rng.random_range(1..=4);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut y: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        y[0] = 1;
        y[1] = -1;
        let kernel = match inst % 3 {
            0 => KernelSpec::gaussian(rng.random_range(0.3..2.0)),
            1 => KernelSpec::linear(),
            _ => KernelSpec::polynomial(2).normalized(true),
        };
        let k = kernel.gram(&xs);
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        let sol = solve_svm_dual(&k, &y, c, &SolverOptions::default()).unwrap();
        let want = oracle(&k, &y, c);
        assert!((sol.objective - want).abs() <= 1e-5, "instance {inst}: smo {} oracle {want}", sol.objective);
        assert!((dual_objective(&k, &y, &sol.alpha) - sol.objective).abs() < 1e-9);
        assert!(sol.kkt_violation <= 1e-6);
        assert!(margin_kkt_residual(&k, &y, c, &sol) <= 1e-5);
        let feas: f64 = sol.alpha.iter().zip(&y).map(|(a, &yi)| a * yi as f64).sum();
        assert!(feas.abs() < 1e-9);
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
    }
}
