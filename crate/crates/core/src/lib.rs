//! Certification engine for randomized smoothing.
//!
//! The crate estimates a smoothed classifier by Monte-Carlo sampling of a base
//! classifier under Gaussian input noise, maps logits onto an r-simplex
//! (hardmax, tempered softmax, or generalized sparsemax), corrects the estimate
//! with a concentration inequality at risk `alpha`, and turns the corrected
//! probabilities into an l2 certified radius. The Lipschitz-Variance-Margin
//! procedure ([`engine::lvm_rs_certify`]) searches over simplex maps and
//! temperatures on a validation batch before certifying on an independent one.
//!
//! With the default `parallel` feature, sampling, mapping and grid evaluation
//! run on rayon; without it everything runs sequentially. Results are
//! bit-identical in both modes.

pub mod concentration;
pub mod engine;
pub mod error;
pub mod exec;
pub mod lipschitz;
pub mod models;
pub mod noise;
pub mod radius;
pub mod simplex;
pub mod specfun;

pub use concentration::{
    bernstein_shift, clopper_pearson_bounds, correct_probs, hoeffding_shift, sample_stats,
    ConcentrationMethod, CorrectedProbs, RiskSplit, SampleStats,
};
pub use engine::{
    accuracy_curve, certified_accuracy_curve, certify_batch, estimate_phat, lvm_rs_certify,
    lvm_rs_certify_scores, lvm_rs_run, sample_scores, select_map, GridConfig, NoiseSeed,
    ScoreMatrix, ScoreOracle, Selection, TemperatureScale,
};
pub use error::{Error, Result};
pub use lipschitz::{
    local_lipschitz_quantile_map, optimal_sigma, smoothed_lipschitz_elementwise,
    smoothed_lipschitz_vector, BoundCase, BoundInputs,
};
pub use models::{LinearModel, ModelKind, SyntheticModel};
pub use radius::{
    certify, margin, radius_r1, radius_r2, radius_r3, Certificate, Prediction, RadiusRule,
};
pub use simplex::{
    apply_map, generalized_sparsemax, hardmax, softmax, MapKind, MapSpec, SimplexVector,
};
pub use specfun::{erf, gaussian_cdf, gaussian_quantile, Probability};
