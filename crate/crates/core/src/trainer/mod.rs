//! Layer-decomposed training of the hashing network with auxiliary
//! activations, per-sample weight copies and scaled dual variables.

mod diagnostics;
mod params;
mod state;
pub mod subproblems;

use std::time::Instant;

use rayon::{ThreadPool, ThreadPoolBuilder};

pub use diagnostics::{write_diagnostics_header, write_diagnostics_row, DiagnosticsRow, DIAGNOSTICS_HEADER};
pub use params::{ExecOptions, Hyperparams};
pub use state::{objective, regularizer, LayerStats, SampleState, TrainerState};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{NetworkConfig, NetworkWeights};
use crate::numerics::{Matrix, Rng};

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub weights: NetworkWeights,
    pub classifier: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn build_pool(threads: usize) -> Result<Option<ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} worker threads: {e}")))
}

/// Relative change `|now − then| / |then|`, zero when both are zero.
pub fn relative_change(then: f64, now: f64) -> f64 {
    let diff = (now - then).abs();
    if diff == 0.0 {
        0.0
    } else if then == 0.0 {
        f64::INFINITY
    } else {
        diff / then.abs()
    }
}

/// True when every layer's mean `β‖u‖` moved by less than `tol` (relative)
/// between the last row and the row `window` iterations before it.
pub fn dual_norms_flat(history: &[DiagnosticsRow], window: usize, tol: f64) -> bool {
    if tol <= 0.0 || history.len() <= window {
        return false;
    }
    let now = &history[history.len() - 1];
    let then = &history[history.len() - 1 - window];
    now.layers
        .iter()
        .zip(&then.layers)
        .all(|(a, b)| relative_change(b.mean_beta_u_norm, a.mean_beta_u_norm) < tol)
}

/// Builds the diagnostics row for the current state.
pub fn diagnostics(
    state: &TrainerState,
    dataset: &LabeledDataset,
    hyper: &Hyperparams,
    iteration: usize,
    wall_time_ms: f64,
) -> Result<DiagnosticsRow> {
    Ok(DiagnosticsRow {
        iteration,
        layers: state.layer_stats(hyper),
        objective: objective(state.weights(), state.classifier(), dataset, hyper)?,
        augmented_lagrangian: state.augmented_lagrangian(hyper),
        wall_time_ms,
    })
}

/// Runs coordinate sweeps until `max_iterations` or until the dual norms
/// flatten, handing one diagnostics row per iteration to `sink`.
pub fn train(
    dataset: &LabeledDataset,
    config: &NetworkConfig,
    hyper: &Hyperparams,
    exec: &ExecOptions,
    rng: &mut Rng,
    sink: &mut dyn FnMut(&DiagnosticsRow) -> Result<()>,
) -> Result<Trained> {
    let mut state = TrainerState::init(dataset, config, hyper, rng)?;
    let pool = build_pool(exec.threads)?;
    let mut history: Vec<DiagnosticsRow> = Vec::new();
    let mut converged = false;
    for it in 1..=hyper.max_iterations {
        let start = Instant::now();
        state.sweep(hyper, exec, pool.as_ref())?;
        let wall = start.elapsed().as_secs_f64() * 1e3;
        let row = diagnostics(&state, dataset, hyper, it, wall)?;
        sink(&row)?;
        history.push(row);
        if dual_norms_flat(&history, hyper.convergence_window, hyper.convergence_rel_tol) {
            converged = true;
            break;
        }
    }
    let iterations = history.len();
    let (weights, classifier) = state.into_parts();
    Ok(Trained {
        weights,
        classifier,
        iterations,
        converged,
    })
}
