//! The Monte Carlo ELBO objective and its pathwise gradients.
//!
//! # Weighting
//!
//! Datasets of wildly different sizes share one responder pool. To keep a
//! large dataset from dominating the shared ability estimates — and tiny
//! datasets from being drowned out — every response to item `j` is weighted
//! by
//!
//! ```text
//! w_j = n_responders / |dataset containing j|
//! ```
//!
//! so each dataset contributes the same total likelihood weight no matter
//! how many items it has, and duplicating a dataset's items leaves its
//! total contribution unchanged. The prior (KL) terms of the per-item
//! latents are scaled by the same `w_j`, which keeps an item's
//! evidence-to-prior balance independent of its dataset's size; the
//! per-responder ability priors keep unit weight.
//!
//! # Reparameterization
//!
//! Each ELBO estimate draws `mc_samples` standard-normal vectors and maps
//! them through `x = mu + sigma * eps`, one value per latent, in a fixed
//! order (abilities, then log-discriminations, difficulties,
//! logit-guessings). Gradients flow through the same path by the chain
//! rule, so for a fixed RNG state the estimate is an exactly
//! differentiable function of the variational parameters — which is what
//! makes finite-difference checking of [`elbo_gradient`] meaningful.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::ResponseMatrix;
use crate::model::{sigmoid, ItemParameters, PROB_EPSILON};

use super::{FitRng, GaussianVariational, PosteriorSet, PriorConfig};

/// Maps unconstrained latents to their constrained item parameters:
/// `alpha = exp(log_alpha)`, `beta` unchanged, `gamma = sigmoid(logit_gamma)`.
pub fn constrain(log_alpha: f64, beta: f64, logit_gamma: f64) -> ItemParameters {
    ItemParameters {
        alpha: log_alpha.exp(),
        beta,
        gamma: sigmoid(logit_gamma),
    }
}

/// Closed-form KL divergence between two univariate Gaussians,
/// `KL(N(q_mu, q_sigma^2) || N(p_mu, p_sigma^2))`.
pub fn kl_gaussian(q_mu: f64, q_sigma: f64, p_mu: f64, p_sigma: f64) -> f64 {
    let var_ratio = (q_sigma * q_sigma) / (p_sigma * p_sigma);
    let mean_term = (q_mu - p_mu) * (q_mu - p_mu) / (2.0 * p_sigma * p_sigma);
    (p_sigma / q_sigma).ln() + 0.5 * var_ratio + mean_term - 0.5
}

/// Gradient of the ELBO with respect to one latent's `(mu, log_sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientPair {
    pub mu: f64,
    pub log_sigma: f64,
}

/// ELBO estimate together with its gradient, shaped like the posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub value: f64,
    pub theta: Vec<GradientPair>,
    pub log_alpha: Vec<GradientPair>,
    pub beta: Vec<GradientPair>,
    pub logit_gamma: Vec<GradientPair>,
}

/// Monte Carlo ELBO estimate for a posterior. Deterministic for a given
/// RNG state; callers that need repeatable values pass a freshly seeded or
/// cloned stream.
pub fn elbo(
    posterior: &PosteriorSet,
    data: &ResponseMatrix,
    prior: &PriorConfig,
    mc_samples: usize,
    rng: &mut FitRng,
) -> f64 {
    let obj = Objective::new(data, prior);
    let params = obj.flatten(posterior);
    obj.elbo_flat(&params, mc_samples, rng)
}

/// Monte Carlo ELBO estimate plus pathwise gradients for every variational
/// parameter.
pub fn elbo_gradient(
    posterior: &PosteriorSet,
    data: &ResponseMatrix,
    prior: &PriorConfig,
    mc_samples: usize,
    rng: &mut FitRng,
) -> ElboGradient {
    let obj = Objective::new(data, prior);
    let params = obj.flatten(posterior);
    let mut grad = vec![0.0; params.len()];
    let value = obj.elbo_gradient_flat(&params, mc_samples, rng, &mut grad);
    let latents = obj.latents();
    let pair = |l: usize| GradientPair {
        mu: grad[l],
        log_sigma: grad[latents + l],
    };
    let (m, n) = (obj.m, obj.n);
    ElboGradient {
        value,
        theta: (0..m).map(pair).collect(),
        log_alpha: (0..n).map(|j| pair(m + j)).collect(),
        beta: (0..n).map(|j| pair(m + n + j)).collect(),
        logit_gamma: (0..n).map(|j| pair(m + 2 * n + j)).collect(),
    }
}

/// Per-dataset weighted likelihood contribution (the likelihood part of the
/// ELBO split by dataset), estimated with `mc_samples` draws.
pub fn weighted_loglik_by_dataset(
    posterior: &PosteriorSet,
    data: &ResponseMatrix,
    mc_samples: usize,
    rng: &mut FitRng,
) -> Vec<f64> {
    assert!(mc_samples > 0, "need at least one Monte Carlo sample");
    let obj = Objective::new(data, &PriorConfig::default());
    let params = obj.flatten(posterior);
    let latents = obj.latents();
    let mut eps = vec![0.0; latents];
    let mut x = vec![0.0; latents];
    let mut acc = vec![0.0; data.n_datasets()];
    let mut per_dataset = vec![0.0; data.n_datasets()];
    for _ in 0..mc_samples {
        obj.draw_latents(&params, rng, &mut eps, &mut x);
        per_dataset.iter_mut().for_each(|v| *v = 0.0);
        obj.likelihood_by_dataset(&x, &mut per_dataset);
        for (a, v) in acc.iter_mut().zip(&per_dataset) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|v| *v /= mc_samples as f64);
    acc
}

// ============================================================================
// Flat-parameter objective shared by the public API and the fit loop
// ============================================================================

/// Bound objective: the data, the per-item weights, and the prior.
///
/// Parameters live in one flat vector: all `mu` values first, then all
/// `log_sigma` values, each in latent order `theta(0..m), log_alpha(0..n),
/// beta(0..n), logit_gamma(0..n)`.
pub(super) struct Objective<'a> {
    data: &'a ResponseMatrix,
    pub(super) m: usize,
    pub(super) n: usize,
    weights: Vec<f64>,
    prior: PriorConfig,
}

impl<'a> Objective<'a> {
    pub(super) fn new(data: &'a ResponseMatrix, prior: &PriorConfig) -> Self {
        let m = data.n_responders();
        let n = data.n_items();
        let sizes = data.dataset_sizes();
        let weights = (0..n)
            .map(|j| m as f64 / sizes[data.dataset_of(j)] as f64)
            .collect();
        Self {
            data,
            m,
            n,
            weights,
            prior: *prior,
        }
    }

    pub(super) fn latents(&self) -> usize {
        self.m + 3 * self.n
    }

    /// Flat vector for the initial posterior (`mu = 0`, `sigma = 0.1`).
    pub(super) fn initial_params(&self) -> Vec<f64> {
        let latents = self.latents();
        let mut v = vec![0.0; 2 * latents];
        let ls = 0.1f64.ln();
        v[latents..].iter_mut().for_each(|x| *x = ls);
        v
    }

    pub(super) fn flatten(&self, posterior: &PosteriorSet) -> Vec<f64> {
        assert_eq!(
            posterior.n_responders(),
            self.m,
            "posterior/matrix responder count mismatch"
        );
        assert_eq!(
            posterior.n_items(),
            self.n,
            "posterior/matrix item count mismatch"
        );
        assert_eq!(
            posterior.beta.len(),
            self.n,
            "posterior block length mismatch"
        );
        assert_eq!(
            posterior.logit_gamma.len(),
            self.n,
            "posterior block length mismatch"
        );
        let latents = self.latents();
        let mut v = vec![0.0; 2 * latents];
        let mut put = |l: usize, g: &GaussianVariational| {
            v[l] = g.mu;
            v[latents + l] = g.log_sigma;
        };
        for (i, g) in posterior.theta.iter().enumerate() {
            put(i, g);
        }
        for (j, g) in posterior.log_alpha.iter().enumerate() {
            put(self.m + j, g);
        }
        for (j, g) in posterior.beta.iter().enumerate() {
            put(self.m + self.n + j, g);
        }
        for (j, g) in posterior.logit_gamma.iter().enumerate() {
            put(self.m + 2 * self.n + j, g);
        }
        v
    }

    pub(super) fn unflatten(&self, v: &[f64]) -> PosteriorSet {
        let latents = self.latents();
        let get = |l: usize| GaussianVariational {
            mu: v[l],
            log_sigma: v[latents + l],
        };
        PosteriorSet {
            theta: (0..self.m).map(get).collect(),
            log_alpha: (0..self.n).map(|j| get(self.m + j)).collect(),
            beta: (0..self.n).map(|j| get(self.m + self.n + j)).collect(),
            logit_gamma: (0..self.n).map(|j| get(self.m + 2 * self.n + j)).collect(),
        }
    }

    /// Draws one standard-normal vector and maps it through
    /// `x = mu + sigma * eps`, filling both buffers.
    fn draw_latents(&self, v: &[f64], rng: &mut FitRng, eps: &mut [f64], x: &mut [f64]) {
        let latents = self.latents();
        for l in 0..latents {
            let e: f64 = rng.sample(StandardNormal);
            eps[l] = e;
            x[l] = v[l] + v[latents + l].exp() * e;
        }
    }

    /// Weighted log-likelihood of one latent draw; when `GRAD` is set, also
    /// accumulates its gradient with respect to each latent into `g`.
    fn sample_pass<const GRAD: bool>(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (m, n) = (self.m, self.n);
        let theta = &x[..m];
        let mut total = 0.0;
        for j in 0..n {
            let alpha = x[m + j].exp();
            let beta = x[m + n + j];
            let gamma = sigmoid(x[m + 2 * n + j]);
            let w = self.weights[j];
            let one_minus_gamma = 1.0 - gamma;
            let dgamma_dlogit = gamma * one_minus_gamma;
            let column = self.data.item_column(j);
            let mut g_log_alpha = 0.0;
            let mut g_beta = 0.0;
            let mut g_logit_gamma = 0.0;
            for i in 0..m {
                let z = alpha * (theta[i] - beta);
                let s = sigmoid(z);
                let p_raw = gamma + one_minus_gamma * s;
                let correct = column[i] != 0;
                // Clamp for finite logs; outside the clamp the likelihood is
                // locally constant, so those cells contribute no gradient.
                let clamped_low = p_raw < PROB_EPSILON;
                let clamped_high = p_raw > 1.0 - PROB_EPSILON;
                let p = if clamped_low {
                    PROB_EPSILON
                } else if clamped_high {
                    1.0 - PROB_EPSILON
                } else {
                    p_raw
                };
                total += w * if correct { p.ln() } else { (1.0 - p).ln() };
                if GRAD && !(clamped_low || clamped_high) {
                    let dl_dp = w * if correct { 1.0 / p } else { -1.0 / (1.0 - p) };
                    let dl_dz = dl_dp * one_minus_gamma * s * (1.0 - s);
                    g[i] += dl_dz * alpha;
                    g_log_alpha += dl_dz * z;
                    g_beta -= dl_dz * alpha;
                    g_logit_gamma += dl_dp * (1.0 - s) * dgamma_dlogit;
                }
            }
            if GRAD {
                g[m + j] += g_log_alpha;
                g[m + n + j] += g_beta;
                g[m + 2 * n + j] += g_logit_gamma;
            }
        }
        total
    }

    /// Weighted log-likelihood of one draw, split by dataset.
    fn likelihood_by_dataset(&self, x: &[f64], out: &mut [f64]) {
        let (m, n) = (self.m, self.n);
        let theta = &x[..m];
        for j in 0..n {
            let alpha = x[m + j].exp();
            let beta = x[m + n + j];
            let gamma = sigmoid(x[m + 2 * n + j]);
            let w = self.weights[j];
            let column = self.data.item_column(j);
            let mut item_total = 0.0;
            for i in 0..m {
                let s = sigmoid(alpha * (theta[i] - beta));
                let p = (gamma + (1.0 - gamma) * s).clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
                item_total += if column[i] != 0 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                };
            }
            out[self.data.dataset_of(j)] += w * item_total;
        }
    }

    /// Total KL from posterior to prior, including per-item weights; when
    /// `grad` is given, *subtracts* the KL gradients from it (the ELBO is
    /// likelihood minus KL).
    fn kl_total(&self, v: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let latents = self.latents();
        let mut total = 0.0;
        let mut one = |l: usize,
                       prior_mean: f64,
                       prior_sd: f64,
                       weight: f64,
                       grad: &mut Option<&mut [f64]>| {
            let mu = v[l];
            let log_sigma = v[latents + l];
            let sigma = log_sigma.exp();
            let var_ratio = sigma * sigma / (prior_sd * prior_sd);
            let centered = mu - prior_mean;
            total += weight
                * (prior_sd.ln() - log_sigma
                    + 0.5 * var_ratio
                    + centered * centered / (2.0 * prior_sd * prior_sd)
                    - 0.5);
            if let Some(g) = grad {
                g[l] -= weight * centered / (prior_sd * prior_sd);
                g[latents + l] -= weight * (var_ratio - 1.0);
            }
        };
        for i in 0..self.m {
            one(i, 0.0, self.prior.theta_sd, 1.0, &mut grad);
        }
        for j in 0..self.n {
            one(
                self.m + j,
                0.0,
                self.prior.log_alpha_sigma,
                self.weights[j],
                &mut grad,
            );
        }
        for j in 0..self.n {
            one(self.m + self.n + j, 0.0, 1.0, self.weights[j], &mut grad);
        }
        for j in 0..self.n {
            one(
                self.m + 2 * self.n + j,
                self.prior.logit_gamma_mean,
                1.0,
                self.weights[j],
                &mut grad,
            );
        }
        total
    }

    /// ELBO estimate over `mc_samples` draws from `rng`.
    pub(super) fn elbo_flat(&self, v: &[f64], mc_samples: usize, rng: &mut FitRng) -> f64 {
        assert!(mc_samples > 0, "need at least one Monte Carlo sample");
        let latents = self.latents();
        let mut eps = vec![0.0; latents];
        let mut x = vec![0.0; latents];
        let mut acc = 0.0;
        for _ in 0..mc_samples {
            self.draw_latents(v, rng, &mut eps, &mut x);
            acc += self.sample_pass::<false>(&x, &mut []);
        }
        acc / mc_samples as f64 - self.kl_total(v, None)
    }

    /// ELBO estimate and full gradient; `grad` must have `2 * latents`
    /// entries and is overwritten.
    pub(super) fn elbo_gradient_flat(
        &self,
        v: &[f64],
        mc_samples: usize,
        rng: &mut FitRng,
        grad: &mut [f64],
    ) -> f64 {
        assert!(mc_samples > 0, "need at least one Monte Carlo sample");
        let latents = self.latents();
        assert_eq!(grad.len(), 2 * latents);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut eps = vec![0.0; latents];
        let mut x = vec![0.0; latents];
        let mut g_latent = vec![0.0; latents];
        let mut acc = 0.0;
        for _ in 0..mc_samples {
            self.draw_latents(v, rng, &mut eps, &mut x);
            g_latent.iter_mut().for_each(|g| *g = 0.0);
            acc += self.sample_pass::<true>(&x, &mut g_latent);
            for l in 0..latents {
                grad[l] += g_latent[l];
                // d x / d log_sigma = sigma * eps along the same path.
                grad[latents + l] += g_latent[l] * v[latents + l].exp() * eps[l];
            }
        }
        let scale = 1.0 / mc_samples as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        acc * scale - self.kl_total(v, Some(grad))
    }
}

// ============================================================================
// Tests
// ============================================================================
