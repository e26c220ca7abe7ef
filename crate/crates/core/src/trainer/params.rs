use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Penalty weights, dual steps and solver budgets for training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Ridge on the network weights.
    pub alpha_theta: f64,
    /// Ridge on the linear classifier.
    pub alpha_w: f64,
    /// Dual step for the activation constraints.
    pub beta: f64,
    /// Dual step for the weight-copy constraints.
    pub gamma: f64,
    pub subgrad_steps: usize,
    /// Step multiplier; each subproblem divides it by a curvature bound and
    /// by `sqrt(t)` at step `t`.
    pub subgrad_base_step: f64,
    pub max_iterations: usize,
    pub convergence_window: usize,
    /// Relative change of every layer's mean dual norm over the window below
    /// which training stops. Zero disables the test.
    pub convergence_rel_tol: f64,
    /// Uniform init half-width; `None` picks `sqrt(6 / fan_in)` per layer.
    pub init_scale: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha_theta: 1e-2,
            alpha_w: 1e-2,
            beta: 0.1,
            gamma: 0.1,
            subgrad_steps: 20,
            subgrad_base_step: 1.0,
            max_iterations: 100,
            convergence_window: 10,
            convergence_rel_tol: 0.05,
            init_scale: None,
        }
    }
}

impl Hyperparams {
    /// Defaults with `gamma` tied to `beta`.
    pub fn with_beta(beta: f64) -> Self {
        Hyperparams {
            beta,
            gamma: beta,
            ..Hyperparams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("alpha_theta", self.alpha_theta),
            ("alpha_w", self.alpha_w),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("subgrad_base_step", self.subgrad_base_step),
            ("convergence_rel_tol", self.convergence_rel_tol),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
            }
        }
        if self.alpha_theta < 0.0 || self.alpha_w < 0.0 {
            return Err(Error::InvalidArgument("regularization weights must be >= 0".into()));
        }
        if self.beta <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::InvalidArgument("beta and gamma must be > 0".into()));
        }
        if self.subgrad_base_step <= 0.0 {
            return Err(Error::InvalidArgument("subgrad_base_step must be > 0".into()));
        }
        if self.subgrad_steps == 0 || self.convergence_window == 0 {
            return Err(Error::InvalidArgument(
                "subgrad_steps and convergence_window must be >= 1".into(),
            ));
        }
        if self.convergence_rel_tol < 0.0 {
            return Err(Error::InvalidArgument("convergence_rel_tol must be >= 0".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("init_scale must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// How the sweep is executed; none of these change the algorithm.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    /// Solve the top-layer and classifier problems by subgradient descent
    /// instead of their closed forms.
    pub force_subgradient: bool,
    /// Sum the weight copies with an unordered parallel reduction.
    /// Results then match the sequential sum only to about 1e-9.
    pub parallel_reduce: bool,
    /// Worker threads for per-sample phases.
    pub threads: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            force_subgradient: false,
            parallel_reduce: false,
            threads: 1,
        }
    }
}
