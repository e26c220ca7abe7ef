use rayon::prelude::*;
use rayon::ThreadPool;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{relu_layer, NetworkConfig, NetworkWeights};
use crate::numerics::{norm, norm_sq, random_matrix, subgradient_minimize, Matrix, Rng, SpdFactor, StepRule};
use crate::trainer::params::{ExecOptions, Hyperparams};
use crate::trainer::subproblems::{
    minimize_hidden_activation, minimize_weight_copy, spectral_norm, POWER_ITERS, SPECTRAL_MARGIN,
};

/// Auxiliary and dual variables of one training sample.
///
/// Layer-indexed vectors hold `z` for `m = 0..=M` and everything else for
/// `m = 1..=M` at position `m − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleState {
    pub z: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub theta_tilde: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub y: Vec<f64>,
}

impl SampleState {
    /// `f(z_{m−1}; θ̃⁽ᵐ⁾)`.
    pub fn layer_output(&self, m: usize) -> Vec<f64> {
        relu_layer(&self.z[m - 1], &self.theta_tilde[m - 1]).expect("shapes fixed at init")
    }

    /// `z_m − f(z_{m−1}; θ̃⁽ᵐ⁾)`.
    pub fn residual(&self, m: usize) -> Vec<f64> {
        let f = self.layer_output(m);
        self.z[m].iter().zip(&f).map(|(z, f)| z - f).collect()
    }

    fn update_dual_u(&mut self, m: usize) {
        let r = self.residual(m);
        for (u, r) in self.u[m - 1].iter_mut().zip(r) {
            *u += r;
        }
    }

    fn update_dual_v(&mut self, m: usize, theta: &Matrix) {
        let v = self.v[m - 1].as_mut_slice();
        for ((v, &th), &tt) in v
            .iter_mut()
            .zip(theta.as_slice())
            .zip(self.theta_tilde[m - 1].as_slice())
        {
            *v += th - tt;
        }
    }

    fn update_top_z(&mut self, classifier: &Matrix, factor: &SpdFactor, beta: f64) -> Result<()> {
        let m = self.z.len() - 1;
        let f = self.layer_output(m);
        let mut rhs = classifier.matvec(&self.y)?;
        for ((r, f), u) in rhs.iter_mut().zip(&f).zip(&self.u[m - 1]) {
            *r += beta * (f - u);
        }
        self.z[m] = factor.solve_vec(&rhs)?;
        Ok(())
    }

    fn update_top_z_subgradient(&mut self, classifier: &Matrix, sigma_w: f64, hyper: &Hyperparams) -> Result<()> {
        let m = self.z.len() - 1;
        let target: Vec<f64> = self
            .layer_output(m)
            .iter()
            .zip(&self.u[m - 1])
            .map(|(f, u)| f - u)
            .collect();
        let beta = hyper.beta;
        let y = &self.y;
        let mut pred = vec![0.0; classifier.cols()];
        let mut tmp = vec![0.0; classifier.rows()];
        let obj = |z: &[f64], g: &mut [f64]| {
            classifier.matvec_transposed_into(z, &mut pred);
            let mut val = 0.0;
            for (p, &yc) in pred.iter_mut().zip(y) {
                *p -= yc;
                val += 0.5 * *p * *p;
            }
            classifier.matvec_into(&pred, &mut tmp);
            for (((gk, &zk), &tk), &wk) in g.iter_mut().zip(z).zip(&target).zip(&tmp) {
                let d = zk - tk;
                val += 0.5 * beta * d * d;
                *gk = wk + beta * d;
            }
            val
        };
        let lipschitz = sigma_w * sigma_w + beta;
        let rule = StepRule::new(hyper.subgrad_base_step / lipschitz);
        self.z[m] = subgradient_minimize(obj, &self.z[m], hyper.subgrad_steps, rule)?.x;
        Ok(())
    }

    fn update_mid_z(&mut self, m: usize, sigma_bound: f64, hyper: &Hyperparams) -> Result<()> {
        let target: Vec<f64> = self
            .layer_output(m)
            .iter()
            .zip(&self.u[m - 1])
            .map(|(f, u)| f - u)
            .collect();
        let b: Vec<f64> = self.z[m + 1].iter().zip(&self.u[m]).map(|(z, u)| z + u).collect();
        self.z[m] = minimize_hidden_activation(
            &self.z[m],
            &target,
            &self.theta_tilde[m],
            &b,
            sigma_bound,
            hyper.subgrad_steps,
            hyper.subgrad_base_step,
        )?;
        Ok(())
    }

    fn update_theta_tilde(&mut self, m: usize, theta: &Matrix, hyper: &Hyperparams) -> Result<()> {
        let t: Vec<f64> = self.z[m].iter().zip(&self.u[m - 1]).map(|(z, u)| z + u).collect();
        minimize_weight_copy(
            &mut self.theta_tilde[m - 1],
            &self.z[m - 1],
            &t,
            theta,
            &self.v[m - 1],
            hyper.beta,
            hyper.gamma,
            hyper.subgrad_steps,
            hyper.subgrad_base_step,
        )
    }
}

/// All primal, auxiliary and dual variables of the training problem.
#[derive(Clone, Debug)]
pub struct TrainerState {
    weights: NetworkWeights,
    classifier: Matrix,
    samples: Vec<SampleState>,
}

impl TrainerState {
    /// Random `Θ` and `W`; weight copies equal to `Θ`; activations from a
    /// forward pass; zero duals.
    pub fn init(dataset: &LabeledDataset, config: &NetworkConfig, hyper: &Hyperparams, rng: &mut Rng) -> Result<Self> {
        hyper.validate()?;
        config.validate()?;
        if config.input_dim != dataset.dim() {
            return Err(Error::dim(format!(
                "network input is {} but samples have {} features",
                config.input_dim,
                dataset.dim()
            )));
        }
        let weights = NetworkWeights::random(config.clone(), rng, hyper.init_scale)?;
        let k = config.code_bits();
        let w_scale = hyper.init_scale.unwrap_or_else(|| (6.0 / k as f64).sqrt());
        let classifier = random_matrix(rng, k, dataset.num_classes(), w_scale)?;
        TrainerState::from_parts(dataset, weights, classifier)
    }

    /// Initial state around given weights.
    pub fn from_parts(dataset: &LabeledDataset, weights: NetworkWeights, classifier: Matrix) -> Result<Self> {
        let cfg = weights.config();
        if cfg.input_dim != dataset.dim() {
            return Err(Error::dim("network input does not match dataset features"));
        }
        if classifier.shape() != (cfg.code_bits(), dataset.num_classes()) {
            return Err(Error::dim(format!(
                "classifier is {:?}, expected ({}, {})",
                classifier.shape(),
                cfg.code_bits(),
                dataset.num_classes()
            )));
        }
        let depth = cfg.depth();
        let samples = (0..dataset.len())
            .map(|i| {
                let z = weights.forward_all(&dataset.sample(i))?;
                Ok(SampleState {
                    u: (1..=depth).map(|m| vec![0.0; cfg.dim(m)]).collect(),
                    theta_tilde: weights.layers().to_vec(),
                    v: weights
                        .layers()
                        .iter()
                        .map(|l| Matrix::zeros(l.rows(), l.cols()))
                        .collect(),
                    y: dataset.label(i),
                    z,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainerState {
            weights,
            classifier,
            samples,
        })
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn classifier(&self) -> &Matrix {
        &self.classifier
    }

    pub fn depth(&self) -> usize {
        self.weights.depth()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, i: usize) -> &SampleState {
        &self.samples[i]
    }

    /// Direct access for tests and experiments that set up specific states.
    pub fn sample_mut(&mut self, i: usize) -> &mut SampleState {
        &mut self.samples[i]
    }

    pub fn samples(&self) -> &[SampleState] {
        &self.samples
    }

    pub fn set_classifier(&mut self, classifier: Matrix) -> Result<()> {
        self.classifier.check_same_shape(&classifier)?;
        self.classifier = classifier;
        Ok(())
    }

    pub fn set_layer(&mut self, m: usize, theta: Matrix) -> Result<()> {
        self.weights.layer(m).check_same_shape(&theta)?;
        *self.weights.layer_mut(m) = theta;
        Ok(())
    }

    pub fn into_parts(self) -> (NetworkWeights, Matrix) {
        (self.weights, self.classifier)
    }

    fn check_layer(&self, m: usize, lo: usize, hi: usize) -> Result<()> {
        if m < lo || m > hi {
            return Err(Error::InvalidArgument(format!("layer {m} outside {lo}..={hi}")));
        }
        Ok(())
    }

    fn top_factor(&self, beta: f64) -> Result<SpdFactor> {
        let w = &self.classifier;
        let mut a = w.matmul(&w.transpose())?;
        for k in 0..a.rows() {
            a[(k, k)] += beta;
        }
        SpdFactor::new(&a)
    }

    /// Closed-form top-layer activation update for sample `i`:
    /// `(W Wᵀ + βI) z = W y + β (f(z_{M−1}; θ̃⁽ᴹ⁾) − u_M)`.
    pub fn update_top_z(&mut self, i: usize, hyper: &Hyperparams) -> Result<()> {
        let factor = self.top_factor(hyper.beta)?;
        self.samples[i].update_top_z(&self.classifier, &factor, hyper.beta)
    }

    /// Top-layer update by subgradient descent on the same objective.
    pub fn update_top_z_subgradient(&mut self, i: usize, hyper: &Hyperparams) -> Result<()> {
        let sigma = spectral_norm(&self.classifier, POWER_ITERS) * SPECTRAL_MARGIN;
        self.samples[i].update_top_z_subgradient(&self.classifier, sigma, hyper)
    }

    /// Hidden activation update for `1 ≤ m ≤ M − 1`.
    pub fn update_mid_z(&mut self, i: usize, m: usize, hyper: &Hyperparams) -> Result<()> {
        self.check_layer(m, 1, self.depth() - 1)?;
        let sigma = spectral_norm(&self.samples[i].theta_tilde[m], POWER_ITERS) * SPECTRAL_MARGIN;
        self.samples[i].update_mid_z(m, sigma, hyper)
    }

    /// `u_m += z_m − f(z_{m−1}; θ̃⁽ᵐ⁾)`.
    pub fn update_dual_u(&mut self, i: usize, m: usize) -> Result<()> {
        self.check_layer(m, 1, self.depth())?;
        self.samples[i].update_dual_u(m);
        Ok(())
    }

    pub fn update_theta_tilde(&mut self, i: usize, m: usize, hyper: &Hyperparams) -> Result<()> {
        self.check_layer(m, 1, self.depth())?;
        let theta = self.weights.layer(m);
        self.samples[i].update_theta_tilde(m, theta, hyper)
    }

    /// `θ⁽ᵐ⁾ = γ / (γN + α_θ) · Σᵢ (θ̃ᵢ⁽ᵐ⁾ − vᵢ⁽ᵐ⁾)`, summed in sample order.
    pub fn update_theta_global(&mut self, m: usize, hyper: &Hyperparams) -> Result<()> {
        self.update_theta_global_with(m, hyper, false)
    }

    pub(crate) fn update_theta_global_with(&mut self, m: usize, hyper: &Hyperparams, parallel: bool) -> Result<()> {
        self.check_layer(m, 1, self.depth())?;
        let denom = hyper.gamma * self.samples.len() as f64 + hyper.alpha_theta;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma*N + alpha_theta = {denom}")));
        }
        let (rows, cols) = self.weights.layer(m).shape();
        let add = |mut acc: Matrix, s: &SampleState| {
            let acc_s = acc.as_mut_slice();
            for ((a, &t), &v) in acc_s
                .iter_mut()
                .zip(s.theta_tilde[m - 1].as_slice())
                .zip(s.v[m - 1].as_slice())
            {
                *a += t - v;
            }
            acc
        };
        let mut sum = if parallel {
            self.samples.par_iter().fold(|| Matrix::zeros(rows, cols), add).reduce(
                || Matrix::zeros(rows, cols),
                |mut a, b| {
                    a.add_scaled(1.0, &b).expect("same shape");
                    a
                },
            )
        } else {
            self.samples.iter().fold(Matrix::zeros(rows, cols), add)
        };
        sum.scale(hyper.gamma / denom);
        *self.weights.layer_mut(m) = sum;
        Ok(())
    }

    /// `v_m += θ⁽ᵐ⁾ − θ̃ᵢ⁽ᵐ⁾`.
    pub fn update_dual_v(&mut self, i: usize, m: usize) -> Result<()> {
        self.check_layer(m, 1, self.depth())?;
        let theta = self.weights.layer(m);
        self.samples[i].update_dual_v(m, theta);
        Ok(())
    }

    fn classifier_system(&self, alpha_w: f64) -> (Matrix, Matrix) {
        let m = self.depth();
        let k = self.classifier.rows();
        let c = self.classifier.cols();
        let mut gram = Matrix::zeros(k, k);
        let mut rhs = Matrix::zeros(k, c);
        for s in &self.samples {
            gram.add_outer(1.0, &s.z[m], &s.z[m]);
            rhs.add_outer(1.0, &s.z[m], &s.y);
        }
        for d in 0..k {
            gram[(d, d)] += alpha_w;
        }
        (gram, rhs)
    }

    /// Ridge solve `(Σ z zᵀ + α_W I) W = Σ z yᵀ` over the top activations.
    pub fn update_classifier(&mut self, hyper: &Hyperparams) -> Result<()> {
        let (gram, rhs) = self.classifier_system(hyper.alpha_w);
        let factor = SpdFactor::new(&gram).map_err(|e| match e {
            Error::NotPositiveDefinite(_) if hyper.alpha_w == 0.0 => {
                Error::NotPositiveDefinite(" (top activations are rank deficient; use alpha_w > 0)")
            }
            other => other,
        })?;
        self.classifier = factor.solve(&rhs)?;
        Ok(())
    }

    /// Classifier update by subgradient descent on the same objective,
    /// warm-started at the current `W`.
    pub fn update_classifier_subgradient(&mut self, hyper: &Hyperparams) -> Result<()> {
        let (gram, rhs) = self.classifier_system(hyper.alpha_w);
        let (k, c) = self.classifier.shape();
        let y_sq: f64 = self.samples.iter().map(|s| norm_sq(&s.y)).sum();
        // ½ tr(Wᵀ G W) − tr(Wᵀ R) + ½ Σ‖y‖², gradient G W − R
        let obj = |w: &[f64], g: &mut [f64]| {
            let wm = Matrix::from_vec(k, c, w.to_vec()).expect("shape");
            let gw = gram.matmul(&wm).expect("shape");
            let mut val = 0.5 * y_sq;
            for idx in 0..k * c {
                val += 0.5 * w[idx] * gw.as_slice()[idx] - w[idx] * rhs.as_slice()[idx];
                g[idx] = gw.as_slice()[idx] - rhs.as_slice()[idx];
            }
            val
        };
        let lipschitz = spectral_norm(&gram, POWER_ITERS) * SPECTRAL_MARGIN;
        let rule = StepRule::new(hyper.subgrad_base_step / lipschitz);
        let min = subgradient_minimize(obj, self.classifier.as_slice(), hyper.subgrad_steps, rule)?;
        self.classifier = Matrix::from_vec(k, c, min.x)?;
        Ok(())
    }

    /// One coordinate sweep: top activations and duals, hidden activations
    /// and duals from the top down, then per layer the weight copies, the
    /// consensus weights and their duals, and finally the classifier.
    pub fn sweep(&mut self, hyper: &Hyperparams, exec: &ExecOptions, pool: Option<&ThreadPool>) -> Result<()> {
        let depth = self.depth();

        if exec.force_subgradient {
            let sigma = spectral_norm(&self.classifier, POWER_ITERS) * SPECTRAL_MARGIN;
            let w = &self.classifier;
            for_each_sample(&mut self.samples, pool, |s| {
                s.update_top_z_subgradient(w, sigma, hyper)?;
                s.update_dual_u(depth);
                Ok(())
            })?;
        } else {
            let factor = self.top_factor(hyper.beta)?;
            let w = &self.classifier;
            for_each_sample(&mut self.samples, pool, |s| {
                s.update_top_z(w, &factor, hyper.beta)?;
                s.update_dual_u(depth);
                Ok(())
            })?;
        }

        for m in (1..depth).rev() {
            // ‖θ̃ᵢ‖₂ ≤ ‖θ‖₂ + ‖θ̃ᵢ − θ‖_F
            let theta_next = self.weights.layer(m + 1);
            let sigma_consensus = spectral_norm(theta_next, POWER_ITERS) * SPECTRAL_MARGIN;
            for_each_sample(&mut self.samples, pool, |s| {
                let dev = s.theta_tilde[m]
                    .as_slice()
                    .iter()
                    .zip(theta_next.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                s.update_mid_z(m, sigma_consensus + dev, hyper)?;
                s.update_dual_u(m);
                Ok(())
            })?;
        }

        for m in 1..=depth {
            let theta = self.weights.layer(m);
            for_each_sample(&mut self.samples, pool, |s| s.update_theta_tilde(m, theta, hyper))?;
            match (exec.parallel_reduce, pool) {
                (true, Some(p)) => p.install(|| self.update_theta_global_with(m, hyper, true))?,
                _ => self.update_theta_global_with(m, hyper, false)?,
            }
            let theta = self.weights.layer(m);
            for_each_sample(&mut self.samples, pool, |s| {
                s.update_dual_v(m, theta);
                Ok(())
            })?;
        }

        if exec.force_subgradient {
            self.update_classifier_subgradient(hyper)
        } else {
            self.update_classifier(hyper)
        }
    }

    /// Per-layer `Eᵢ β‖uᵢₘ‖`, `Eᵢ γ‖vᵢₘ‖` and `Eᵢ ‖zᵢₘ − f(zᵢ,ₘ₋₁; θ̃ᵢ⁽ᵐ⁾)‖`.
    pub fn layer_stats(&self, hyper: &Hyperparams) -> Vec<LayerStats> {
        let n = self.samples.len() as f64;
        (1..=self.depth())
            .map(|m| {
                let mut st = LayerStats::default();
                for s in &self.samples {
                    st.mean_beta_u_norm += hyper.beta * norm(&s.u[m - 1]);
                    st.mean_gamma_v_norm += hyper.gamma * s.v[m - 1].frobenius_norm();
                    st.mean_residual_norm += norm(&s.residual(m));
                }
                st.mean_beta_u_norm /= n;
                st.mean_gamma_v_norm /= n;
                st.mean_residual_norm /= n;
                st
            })
            .collect()
    }

    /// Loss on the auxiliary top activations plus regularizer plus both
    /// scaled-dual penalty terms.
    pub fn augmented_lagrangian(&self, hyper: &Hyperparams) -> f64 {
        let depth = self.depth();
        let mut loss = 0.0;
        let mut z_pen = 0.0;
        let mut theta_pen = 0.0;
        let mut pred = vec![0.0; self.classifier.cols()];
        for s in &self.samples {
            self.classifier.matvec_transposed_into(&s.z[depth], &mut pred);
            loss += 0.5 * pred.iter().zip(&s.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
            for m in 1..=depth {
                let r = s.residual(m);
                z_pen += r.iter().zip(&s.u[m - 1]).map(|(r, u)| (r + u).powi(2)).sum::<f64>();
                let theta = self.weights.layer(m).as_slice();
                theta_pen += theta
                    .iter()
                    .zip(s.theta_tilde[m - 1].as_slice())
                    .zip(s.v[m - 1].as_slice())
                    .map(|((th, tt), v)| (th - tt + v).powi(2))
                    .sum::<f64>();
            }
        }
        loss + regularizer(&self.weights, &self.classifier, hyper)
            + 0.5 * hyper.beta * z_pen
            + 0.5 * hyper.gamma * theta_pen
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayerStats {
    pub mean_beta_u_norm: f64,
    pub mean_gamma_v_norm: f64,
    pub mean_residual_norm: f64,
}

/// `α_θ/2 Σ‖θ⁽ᵐ⁾‖² + α_W/2 ‖W‖²`.
pub fn regularizer(weights: &NetworkWeights, classifier: &Matrix, hyper: &Hyperparams) -> f64 {
    let theta_sq: f64 = weights.layers().iter().map(Matrix::frobenius_norm_sq).sum();
    0.5 * hyper.alpha_theta * theta_sq + 0.5 * hyper.alpha_w * classifier.frobenius_norm_sq()
}

/// Training objective of the network itself:
/// `½ Σᵢ ‖Wᵀ F_M(xᵢ) − yᵢ‖² + regularizer`, evaluated by forward passes.
pub fn objective(
    weights: &NetworkWeights,
    classifier: &Matrix,
    dataset: &LabeledDataset,
    hyper: &Hyperparams,
) -> Result<f64> {
    if classifier.shape() != (weights.code_bits(), dataset.num_classes()) {
        return Err(Error::dim("classifier shape does not match network and labels"));
    }
    let mut loss = 0.0;
    let mut pred = vec![0.0; classifier.cols()];
    for i in 0..dataset.len() {
        let f = weights.forward_all(&dataset.sample(i))?;
        classifier.matvec_transposed_into(f.last().expect("non-empty"), &mut pred);
        let y = dataset.label(i);
        loss += 0.5 * pred.iter().zip(&y).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
    }
    Ok(loss + regularizer(weights, classifier, hyper))
}

fn for_each_sample<F>(samples: &mut [SampleState], pool: Option<&ThreadPool>, f: F) -> Result<()>
where
    F: Fn(&mut SampleState) -> Result<()> + Sync + Send,
{
    match pool {
        Some(p) => p.install(|| samples.par_iter_mut().try_for_each(&f)),
        None => samples.iter_mut().try_for_each(f),
    }
}
