//! Per-sample subproblem solvers.
//!
//! Notation: `a` is the layer input, `t` the target output plus its scaled
//! dual, `c` the consensus weights plus their scaled dual.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm_sq, subgradient_minimize, Matrix, StepRule};

/// Upper estimate of the largest singular value of `m` by power iteration
/// on `mᵀm` from a fixed start vector.
pub fn spectral_norm(m: &Matrix, iterations: usize) -> f64 {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut y = vec![0.0; rows];
    let mut sigma_sq = 0.0;
    for _ in 0..iterations.max(1) {
        m.matvec_into(&x, &mut y);
        m.matvec_transposed_into(&y, &mut x);
        let nx = norm_sq(&x).sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        // ‖mᵀm x‖ for unit x converges to σ² from below
        sigma_sq = nx;
        x.iter_mut().for_each(|v| *v /= nx);
    }
    sigma_sq.sqrt()
}

/// Number of power iterations used for step-size bounds.
pub(crate) const POWER_ITERS: usize = 30;
/// Margin over the power-iteration estimate, which approaches σ from below.
pub(crate) const SPECTRAL_MARGIN: f64 = 1.05;

/// Minimizes `‖z − target‖² + ‖b − relu(W z)‖²` over `z` from `z0`, where
/// `target = f(previous layer) − u` and `b = next activation + next dual`.
///
/// `sigma_bound` must bound the spectral norm of `next_weights`; the step is
/// `base / (2 (1 + σ²) sqrt(t))`.
pub fn minimize_hidden_activation(
    z0: &[f64],
    target: &[f64],
    next_weights: &Matrix,
    b: &[f64],
    sigma_bound: f64,
    steps: usize,
    base_step: f64,
) -> Result<Vec<f64>> {
    if next_weights.as_slice().iter().all(|&w| w == 0.0) {
        // second term is constant
        return Ok(target.to_vec());
    }
    let mut pre = vec![0.0; next_weights.rows()];
    let mut back = vec![0.0; next_weights.rows()];
    let mut tmp = vec![0.0; z0.len()];
    let objective = |z: &[f64], g: &mut [f64]| {
        next_weights.matvec_into(z, &mut pre);
        let mut val = 0.0;
        for ((gk, &zk), &tk) in g.iter_mut().zip(z).zip(target) {
            let d = zk - tk;
            val += d * d;
            *gk = 2.0 * d;
        }
        for ((w, &p), &br) in back.iter_mut().zip(&pre).zip(b) {
            let r = br - p.max(0.0);
            val += r * r;
            *w = if p > 0.0 { -2.0 * r } else { 0.0 };
        }
        next_weights.matvec_transposed_into(&back, &mut tmp);
        for (gk, tk) in g.iter_mut().zip(&tmp) {
            *gk += tk;
        }
        val
    };
    let lipschitz = 2.0 * (1.0 + sigma_bound * sigma_bound);
    let min = subgradient_minimize(objective, z0, steps, StepRule::new(base_step / lipschitz))?;
    Ok(min.x)
}

/// Value of `β ‖t − relu(θ̃ a)‖² + γ ‖c − θ̃‖²`, with `c = consensus + dual`.
pub fn weight_copy_objective(
    theta_tilde: &Matrix,
    a: &[f64],
    t: &[f64],
    consensus: &Matrix,
    dual: &Matrix,
    beta: f64,
    gamma: f64,
) -> f64 {
    let mut fit = 0.0;
    let mut prox = 0.0;
    for (r, &tr) in t.iter().enumerate().take(theta_tilde.rows()) {
        let h = dot(theta_tilde.row(r), a).max(0.0);
        fit += (tr - h).powi(2);
        for ((&w, &c), &v) in theta_tilde.row(r).iter().zip(consensus.row(r)).zip(dual.row(r)) {
            prox += (c + v - w).powi(2);
        }
    }
    beta * fit + gamma * prox
}

/// Subgradient descent on `β ‖t − relu(θ̃ a)‖² + γ ‖c − θ̃‖²` over the weight
/// copy `θ̃`, warm-started at its current value and updated in place.
///
/// The subgradient is `−2β g aᵀ + 2γ (θ̃ − c)` with `g` the masked residual,
/// so every iterate has the form `θ̃ₜ = c + αₜ (θ̃₀ − c) + pₜ aᵀ` for a scalar
/// `αₜ` and a vector `pₜ`. The descent runs on `(α, p)`, which makes each
/// step cost O(rows) instead of O(rows·cols); the iterates are the ones the
/// dense descent would produce. The step is `base / (2 (β‖a‖² + γ) sqrt(t))`.
#[allow(clippy::too_many_arguments)]
pub fn minimize_weight_copy(
    theta_tilde: &mut Matrix,
    a: &[f64],
    t: &[f64],
    consensus: &Matrix,
    dual: &Matrix,
    beta: f64,
    gamma: f64,
    steps: usize,
    base_step: f64,
) -> Result<()> {
    let (rows, cols) = theta_tilde.shape();
    debug_assert_eq!(a.len(), cols);
    debug_assert_eq!(t.len(), rows);
    let aa = norm_sq(a);
    if aa == 0.0 || beta == 0.0 {
        // first term constant: θ̃ = c
        for r in 0..rows {
            let out = theta_tilde.row_mut(r);
            for ((w, &c), &v) in out.iter_mut().zip(consensus.row(r)).zip(dual.row(r)) {
                *w = c + v;
            }
        }
        return Ok(());
    }

    // c·a, (θ̃₀ − c)·a and ‖θ̃₀ − c‖² in one pass
    let mut ca = vec![0.0; rows];
    let mut d0a = vec![0.0; rows];
    let mut d0_sq = 0.0;
    for r in 0..rows {
        let (mut sc, mut sd) = (0.0, 0.0);
        for (((&w, &c), &v), &ak) in theta_tilde.row(r).iter().zip(consensus.row(r)).zip(dual.row(r)).zip(a) {
            let cr = c + v;
            let d = w - cr;
            sc += cr * ak;
            sd += d * ak;
            d0_sq += d * d;
        }
        ca[r] = sc;
        d0a[r] = sd;
    }

    let mut alpha = 1.0f64;
    let mut p = vec![0.0; rows];
    let mut g = vec![0.0; rows];
    // value at (alpha, p); fills the masked residual g
    let eval = |alpha: f64, p: &[f64], g: &mut [f64]| -> f64 {
        let mut fit = 0.0;
        let mut pd = 0.0;
        for r in 0..rows {
            let pre = ca[r] + alpha * d0a[r] + p[r] * aa;
            let res = t[r] - pre.max(0.0);
            fit += res * res;
            g[r] = if pre > 0.0 { res } else { 0.0 };
            pd += p[r] * d0a[r];
        }
        let dist = alpha * alpha * d0_sq + 2.0 * alpha * pd + norm_sq(p) * aa;
        beta * fit + gamma * dist
    };

    let f0 = eval(alpha, &p, &mut g);
    if !f0.is_finite() {
        return Err(Error::NonFinite { step: 0, value: f0 });
    }
    let mut best = f0;
    let mut best_alpha = alpha;
    let mut best_p = p.clone();
    let rule = StepRule::new(base_step / (2.0 * (beta * aa + gamma)));
    for step in 1..=steps {
        // gradient = 2γ α D₀ + 2 (γ p − β g) aᵀ
        let stationary =
            (alpha == 0.0 || d0_sq == 0.0) && p.iter().zip(&g).all(|(&pr, &gr)| gamma * pr - beta * gr == 0.0);
        if stationary {
            break;
        }
        let eta = rule.step(step);
        let shrink = 1.0 - 2.0 * gamma * eta;
        alpha *= shrink;
        for (pr, &gr) in p.iter_mut().zip(&g) {
            *pr = shrink * *pr + 2.0 * beta * eta * gr;
        }
        let f = eval(alpha, &p, &mut g);
        if !f.is_finite() {
            return Err(Error::NonFinite { step, value: f });
        }
        if f < best {
            best = f;
            best_alpha = alpha;
            best_p.copy_from_slice(&p);
        }
    }

    if best_alpha == 1.0 && best_p.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    // θ̃ = α θ̃₀ + (1 − α) c + p aᵀ
    let keep = best_alpha;
    let pull = 1.0 - best_alpha;
    for (r, &pr) in best_p.iter().enumerate().take(rows) {
        let (cons, du) = (consensus.row(r), dual.row(r));
        let out = theta_tilde.row_mut(r);
        for k in 0..cols {
            out[k] = keep * out[k] + pull * (cons[k] + du[k]) + pr * a[k];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{random_matrix, Rng};

    /// Dense reference: generic subgradient descent on the flattened matrix.
    #[allow(clippy::too_many_arguments)]
    fn dense_weight_copy(
        theta_tilde: &Matrix,
        a: &[f64],
        t: &[f64],
        consensus: &Matrix,
        dual: &Matrix,
        beta: f64,
        gamma: f64,
        steps: usize,
        base: f64,
    ) -> Matrix {
        let (rows, cols) = theta_tilde.shape();
        let aa = norm_sq(a);
        let obj = |x: &[f64], g: &mut [f64]| {
            let mut val = 0.0;
            for r in 0..rows {
                let row = &x[r * cols..(r + 1) * cols];
                let pre = dot(row, a);
                let res = t[r] - pre.max(0.0);
                val += beta * res * res;
                let mask = if pre > 0.0 { res } else { 0.0 };
                for k in 0..cols {
                    let c = consensus[(r, k)] + dual[(r, k)];
                    let d = row[k] - c;
                    val += gamma * d * d;
                    g[r * cols + k] = -2.0 * beta * mask * a[k] + 2.0 * gamma * d;
                }
            }
            val
        };
        let rule = StepRule::new(base / (2.0 * (beta * aa + gamma)));
        let m = subgradient_minimize(obj, theta_tilde.as_slice(), steps, rule).unwrap();
        Matrix::from_vec(rows, cols, m.x).unwrap()
    }

    #[test]
    fn factored_descent_matches_dense_descent() {
        for seed in 0..20u64 {
            let mut rng = Rng::new(seed);
            let (rows, cols) = (1 + rng.index(6), 1 + rng.index(6));
            let theta0 = random_matrix(&mut rng, rows, cols, 1.0).unwrap();
            let consensus = random_matrix(&mut rng, rows, cols, 1.0).unwrap();
            let dual = random_matrix(&mut rng, rows, cols, 0.2).unwrap();
            let a: Vec<f64> = (0..cols).map(|_| rng.uniform(0.0, 1.0)).collect();
            let t: Vec<f64> = (0..rows).map(|_| rng.uniform(-0.5, 1.5)).collect();
            let beta = rng.uniform(0.01, 5.0);
            let gamma = rng.uniform(0.01, 5.0);
            let base = rng.uniform(0.2, 1.5);
            let dense = dense_weight_copy(&theta0, &a, &t, &consensus, &dual, beta, gamma, 25, base);
            let mut fact = theta0.clone();
            minimize_weight_copy(&mut fact, &a, &t, &consensus, &dual, beta, gamma, 25, base).unwrap();
            assert!(
                fact.max_abs_diff(&dense) < 1e-9,
                "seed {seed}: {}",
                fact.max_abs_diff(&dense)
            );
            let f0 = weight_copy_objective(&theta0, &a, &t, &consensus, &dual, beta, gamma);
            let f1 = weight_copy_objective(&fact, &a, &t, &consensus, &dual, beta, gamma);
            assert!(f1 <= f0 + 1e-12);
        }
    }

    #[test]
    fn weight_copy_scalar_matches_grid() {
        // β=γ=1, input 1, target 2, c = 0: minimize (2 − max(0,w))² + w²
        let grid = (0..=100_000)
            .map(|k| -5.0 + 1e-4 * k as f64)
            .map(|w: f64| (w, (2.0 - w.max(0.0)).powi(2) + w * w))
            .fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        assert!((grid.0 - 1.0).abs() < 1e-4);
        let mut w = Matrix::from_rows(&[[0.5]]);
        let zero = Matrix::zeros(1, 1);
        minimize_weight_copy(&mut w, &[1.0], &[2.0], &zero, &zero, 1.0, 1.0, 500, 1.0).unwrap();
        assert!((w[(0, 0)] - grid.0).abs() < 1e-3, "{:?}", w);
    }

    #[test]
    fn weight_copy_degenerate_cases_are_exact() {
        let consensus = Matrix::from_rows(&[[1.0, 2.0]]);
        let dual = Matrix::from_rows(&[[0.5, -0.5]]);
        let expect = Matrix::from_rows(&[[1.5, 1.5]]);
        let mut w = Matrix::from_rows(&[[9.0, 9.0]]);
        minimize_weight_copy(&mut w, &[1.0, 1.0], &[3.0], &consensus, &dual, 0.0, 1.0, 10, 1.0).unwrap();
        assert_eq!(w, expect);
        let mut w = Matrix::from_rows(&[[9.0, 9.0]]);
        minimize_weight_copy(&mut w, &[0.0, 0.0], &[3.0], &consensus, &dual, 1.0, 1.0, 10, 1.0).unwrap();
        assert_eq!(w, expect);
    }

    #[test]
    fn hidden_activation_scalar_matches_grid() {
        // ‖z − 1‖² + ‖2 − relu(z)‖², minimum at 1.5
        let grid = (0..=100_000)
            .map(|k| -5.0 + 1e-4 * k as f64)
            .map(|z: f64| (z, (z - 1.0).powi(2) + (2.0 - z.max(0.0)).powi(2)))
            .fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        let w = Matrix::from_rows(&[[1.0]]);
        let z = minimize_hidden_activation(&[0.0], &[1.0], &w, &[2.0], 1.0, 500, 1.0).unwrap();
        assert!((z[0] - grid.0).abs() < 1e-3, "{z:?} vs {}", grid.0);
    }

    #[test]
    fn hidden_activation_shortcuts() {
        let zero = Matrix::zeros(2, 2);
        let z = minimize_hidden_activation(&[5.0, 5.0], &[1.0, -2.0], &zero, &[3.0, 3.0], 0.0, 10, 1.0).unwrap();
        assert_eq!(z, vec![1.0, -2.0]);
        // already optimal: z = target and relu(W z) = b
        let w = Matrix::identity(2);
        let z = minimize_hidden_activation(&[1.0, 2.0], &[1.0, 2.0], &w, &[1.0, 2.0], 1.0, 10, 1.0).unwrap();
        assert_eq!(z, vec![1.0, 2.0]);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Matrix::from_rows(&[[3.0, 0.0], [0.0, -1.0]]);
        assert!((spectral_norm(&m, 50) - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&Matrix::zeros(2, 2), 5), 0.0);
    }
}
