//! Best-so-far subgradient descent with a diminishing step.

use crate::error::{Error, Result};
use crate::numerics::matrix::axpy;

/// Step size `base / sqrt(t)` at step `t = 1, 2, ...`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRule {
    pub base: f64,
}

impl StepRule {
    pub fn new(base: f64) -> Self {
        StepRule { base }
    }

    #[inline]
    pub fn step(&self, t: usize) -> f64 {
        self.base / (t as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    /// Steps actually taken (fewer than requested when a zero subgradient
    /// was reached).
    pub steps: usize,
}

/// Minimizes `objective` starting at `x0`.
///
/// The objective writes a subgradient at `x` into its second argument and
/// returns the value. The iterate with the lowest observed value is
/// returned, so the result is never worse than `x0`. A zero subgradient
/// stops the descent early.
pub fn subgradient_minimize<F>(mut objective: F, x0: &[f64], max_steps: usize, rule: StepRule) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x.len()];
    let f0 = objective(&x, &mut grad);
    if !f0.is_finite() {
        return Err(Error::NonFinite { step: 0, value: f0 });
    }
    let mut best_x = x.clone();
    let mut best = f0;
    let mut steps = 0;
    for t in 1..=max_steps {
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        axpy(-rule.step(t), &grad, &mut x);
        let f = objective(&x, &mut grad);
        if !f.is_finite() {
            return Err(Error::NonFinite { step: t, value: f });
        }
        steps = t;
        if f < best {
            best = f;
            best_x.copy_from_slice(&x);
        }
    }
    Ok(Minimum {
        x: best_x,
        value: best,
        initial_value: f0,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let m = subgradient_minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 1.0);
                (x[0] - 1.0).powi(2)
            },
            &[0.0],
            500,
            StepRule::new(0.5),
        )
        .unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn absolute_value_kink() {
        let m = subgradient_minimize(
            |x, g| {
                g[0] = if x[0] > 0.0 {
                    1.0
                } else if x[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                x[0].abs()
            },
            &[0.5],
            2000,
            StepRule::new(0.1),
        )
        .unwrap();
        assert!(m.x[0].abs() < 1e-2, "{:?}", m.x);
    }

    fn relu_pair(x: &[f64], g: &mut [f64]) -> f64 {
        let z = x[0];
        let r = 2.0 - z.max(0.0);
        let dr = if z > 0.0 { -1.0 } else { 0.0 };
        g[0] = 2.0 * (z - 1.0) + 2.0 * r * dr;
        (z - 1.0).powi(2) + r * r
    }

    #[test]
    fn relu_pair_matches_grid_search() {
        // grid oracle over [-5, 5] with step 1e-4
        let mut g = [0.0];
        let (mut best_z, mut best_f) = (0.0, f64::INFINITY);
        for k in 0..=100_000 {
            let z = -5.0 + 1e-4 * k as f64;
            let f = relu_pair(&[z], &mut g);
            if f < best_f {
                best_f = f;
                best_z = z;
            }
        }
        assert!((best_z - 1.5).abs() < 1e-4);
        let m = subgradient_minimize(relu_pair, &[0.0], 500, StepRule::new(0.25)).unwrap();
        assert!((m.x[0] - best_z).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn never_worse_than_start() {
        // step far too large: every move overshoots, best-so-far keeps x0
        let m = subgradient_minimize(
            |x, g| {
                g[0] = 2.0 * x[0];
                x[0] * x[0]
            },
            &[1.0],
            20,
            StepRule::new(100.0),
        )
        .unwrap();
        assert!(m.value <= m.initial_value);
        assert_eq!(m.x, vec![1.0]);
    }

    #[test]
    fn optimal_start_is_unchanged() {
        let m = subgradient_minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 3.0);
                (x[0] - 3.0).powi(2)
            },
            &[3.0],
            50,
            StepRule::new(0.5),
        )
        .unwrap();
        assert_eq!(m.x, vec![3.0]);
        assert_eq!(m.steps, 0);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let r = subgradient_minimize(
            |_, g| {
                g[0] = 0.0;
                f64::NAN
            },
            &[0.0],
            5,
            StepRule::new(1.0),
        );
        assert!(matches!(r, Err(Error::NonFinite { step: 0, .. })));
        let r = subgradient_minimize(
            |x, g| {
                g[0] = 1.0;
                if x[0] < 0.0 {
                    f64::INFINITY
                } else {
                    x[0]
                }
            },
            &[0.0],
            5,
            StepRule::new(1.0),
        );
        assert!(matches!(r, Err(Error::NonFinite { step: 1, .. })));
    }
}
