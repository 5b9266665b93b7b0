//! Cross-fitted nuisance models.
//!
//! Every prediction consumed by an estimator comes from a model trained without
//! the sample's own fold.

pub mod alc;
pub mod features;
pub mod folds;
pub mod logit;
pub mod reward;
pub mod ridge;
pub mod set;

pub use alc::{estimate_alc, AlcConfig};
pub use features::FeatureSpec;
pub use folds::{kfold_split, FoldAssignment};
pub use logit::{fit_logit, floor_simplex, MultinomialLogitModel};
pub use reward::{fit_reward_model_mtri, fit_reward_model_plain, CriticDictionary, RewardConfig, RewardModel};
pub use ridge::{fit_ridge, CrossFitRidge, MultiRidge, RidgeModel};
pub use set::{
    fit_lag_propensity, fit_lag_target_marginal, fit_nuisances, lag_weight, LagNuisance, NuisanceConfig,
    NuisanceSet, RewardKind,
};
