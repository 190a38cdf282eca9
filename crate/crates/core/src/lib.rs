//! Item-response modeling for benchmark datasets: which items are hard,
//! which discriminate between strong and weak responders, which are mostly
//! guessed — and how much headroom each dataset still has for its best
//! responder.
//!
//! The model is a three-parameter-logistic (3PL) item response model over
//! a binary responder-by-item matrix. Every responder `i` carries a latent
//! ability `theta_i`; every item `j` carries a discrimination `alpha_j`,
//! difficulty `beta_j`, and guessing floor `gamma_j`; the probability of a
//! correct response is
//!
//! ```text
//! P(correct) = gamma + (1 - gamma) * sigmoid(alpha * (theta - beta))
//! ```
//!
//! Items are scored by LEH (locally estimated headroom): the slope of that
//! curve evaluated at the best responder's fitted ability. A steep slope
//! means the item still separates today's strongest responder from a
//! slightly stronger one — the item has headroom left; a flat slope means
//! the item is exhausted (too easy, too hard, or mostly guessing).
//!
//! Fitting is stochastic variational inference written out by hand:
//! mean-field Gaussian posteriors over all latents, a reparameterized
//! Monte Carlo ELBO with dataset-size-balancing weights, exact Gaussian KL
//! terms, analytic chain-rule gradients, and an Adam ascent loop - see
//! [`variational`]. [`synthetic`] generates ground-truth populations so
//! recovery of known parameters can be tested end to end; [`analysis`]
//! turns fits into per-dataset summaries, stability comparisons, and item
//! filters.
//!
//! Everything is deterministic given a seed: fits, sweeps, simulations,
//! and reports reproduce bit-for-bit.

pub mod analysis;
pub mod data;
pub mod model;
pub mod synthetic;
pub mod variational;

pub use analysis::{
    ability_accuracy_pairs, dataset_summaries, guessing_filter, pearson, percentile, spearman,
    stability_check, unanimous_items, AnalysisError, DatasetSummary, StabilityReport, Statistic,
};
pub use data::{DataError, ResponseMatrix, ResponseRecord};
pub use model::{icc_prob, icc_slope, leh_score, sigmoid, Ability, ItemParameters};
pub use synthetic::{
    canonical_fixture, recovery_metrics, sample_truth, simulate_responses, DistributionSpec,
    GeneratorSpec, GroundTruth, RecoveryReport,
};
pub use variational::{
    fit, fit_with_progress, sweep_sigma_alpha, FitConfig, FitResult, PosteriorSet, PriorConfig,
    SweepError, SweepOutcome, SIGMA_ALPHA_GRID,
};
