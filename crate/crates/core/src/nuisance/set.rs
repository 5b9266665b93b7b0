//! Fitted nuisances for every lag of a dataset.

use serde::{Deserialize, Serialize};

use super::alc::{estimate_alc, AlcConfig};
use super::features::FeatureSpec;
use super::folds::{kfold_split, FoldAssignment};
use super::logit::{fit_logit, floor_simplex, MultinomialLogitModel};
use super::reward::{fit_reward_model_mtri, fit_reward_model_plain, CriticDictionary, RewardConfig, RewardModel};
use super::ridge::{CrossFitRidge, MultiRidge};
use crate::data::LaggedDataset;
use crate::error::{DolceError, Result};
use crate::policy::Policy;
use crate::table::ActionTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Plain,
    Mtri,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceConfig {
    /// Number of cross-fitting folds.
    pub k_cf: usize,
    /// Penalty of the lag-propensity logit and the lag-marginal regressions.
    pub reg: f64,
    pub p_min: f64,
    /// Lag-weight clipping threshold.
    pub clip: f64,
    /// Softmin temperature.
    pub tau: f64,
    /// Lag-k reward model.
    pub reward: RewardConfig,
    /// Current-context reward model used by DM and DR.
    pub baseline_reward: RewardConfig,
    pub reward_kind: RewardKind,
    pub mtri_penalty: f64,
    pub gram_eps: f64,
    pub critics: CriticDictionary,
    pub alc: AlcConfig,
    /// Confidence level of the Wald intervals.
    pub level: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            k_cf: 10,
            reg: 1e-2,
            p_min: crate::DEFAULT_P_MIN,
            clip: crate::DEFAULT_CLIP,
            tau: 0.1,
            reward: RewardConfig::default(),
            baseline_reward: RewardConfig { features: FeatureSpec::baseline_default(), ..RewardConfig::default() },
            reward_kind: RewardKind::Plain,
            mtri_penalty: 1.0,
            gram_eps: 1e-6,
            critics: CriticDictionary::default(),
            alc: AlcConfig::default(),
            level: 0.95,
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DolceError::InvalidConfig(m.into()));
        if self.k_cf < 2 {
            return bad("k_cf must be at least 2");
        }
        if !(self.reg > 0.0) || !(self.reward.reg > 0.0) || !(self.baseline_reward.reg > 0.0) || !(self.alc.reg > 0.0) {
            return bad("ridge penalties must be positive");
        }
        if !(self.p_min > 0.0 && self.p_min < 1.0) {
            return bad("p_min must lie in (0, 1)");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.mtri_penalty >= 0.0) || !(self.gram_eps > 0.0) {
            return bad("mtri_penalty must be >= 0 and gram_eps > 0");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        if self.reward.features.dim(1) == 0 || self.baseline_reward.features.uses_lag() {
            return bad("reward feature maps must be nonempty and the baseline map must not use lags");
        }
        Ok(())
    }
}

/// Nuisances for one lag.
#[derive(Clone, Debug)]
pub struct LagNuisance {
    pub lag: usize,
    /// `P(A = a | x_lag)` per training fold.
    pub propensity: Vec<MultinomialLogitModel>,
    /// Regressions of `pi(a|X)` on `x_lag` per training fold.
    pub marginal: Vec<MultiRidge>,
    pub reward: RewardModel,
    /// Out-of-fold lag-marginal logging probabilities.
    pub bar_pi0: ActionTable,
    /// Out-of-fold lag-marginal target probabilities.
    pub bar_pi_theta: ActionTable,
    /// Out-of-fold clipped lag weights at the logged action.
    pub weights: Vec<f64>,
    pub alc: f64,
}

#[derive(Clone, Debug)]
pub struct NuisanceSet {
    pub folds: FoldAssignment,
    pub lags: Vec<LagNuisance>,
    pub clip: f64,
    pub p_min: f64,
    /// Target probabilities `pi(a | X_i)`.
    pub pi: ActionTable,
}

impl NuisanceSet {
    pub fn lag(&self, k: usize) -> Result<&LagNuisance> {
        self.lags
            .iter()
            .find(|l| l.lag == k)
            .ok_or_else(|| DolceError::InvalidInput(format!("no nuisances fitted for lag {k}")))
    }

    pub fn alcs(&self) -> Vec<f64> {
        self.lags.iter().map(|l| l.alc).collect()
    }
}

/// `pi(a | X_i)` for every sample.
pub fn policy_table(data: &LaggedDataset, policy: &Policy) -> Result<ActionTable> {
    if policy.num_actions() != data.num_actions() {
        return Err(DolceError::InvalidInput(format!(
            "policy has {} actions, data has {}",
            policy.num_actions(),
            data.num_actions()
        )));
    }
    let mut t = ActionTable::zeros(data.len(), data.num_actions());
    for (i, s) in data.samples().iter().enumerate() {
        t.row_mut(i).copy_from_slice(&policy.probs(&s.x)?);
    }
    Ok(t)
}

/// Multinomial logit of `A` on `x_lag`, one per training fold, with
/// out-of-fold floored predictions.
pub fn fit_lag_propensity(
    data: &LaggedDataset,
    lag: usize,
    folds: &FoldAssignment,
    reg: f64,
    p_min: f64,
) -> Result<(Vec<MultinomialLogitModel>, ActionTable)> {
    let z = FeatureSpec::lag_only().matrix(data, Some(lag))?;
    let actions = data.actions();
    let mut models = Vec::with_capacity(folds.num_folds());
    for j in 0..folds.num_folds() {
        models.push(fit_logit(&z, &folds.train_indices(j), &actions, data.num_actions(), reg, p_min)?);
    }
    let oof = ActionTable::from_rows(
        &(0..data.len()).map(|i| models[folds.fold_of(i)].predict(z.row(i))).collect::<Vec<_>>(),
    );
    Ok((models, oof))
}

/// Per-action ridge of `pi(a | X)` on `x_lag`, with out-of-fold predictions
/// clipped to `[p_min, 1]` and renormalized.
pub fn fit_lag_target_marginal(
    data: &LaggedDataset,
    pi: &ActionTable,
    lag: usize,
    folds: &FoldAssignment,
    reg: f64,
    p_min: f64,
) -> Result<(Vec<MultiRidge>, ActionTable)> {
    let z = FeatureSpec::lag_only().matrix(data, Some(lag))?;
    let cf = CrossFitRidge::new(z, folds.clone(), reg)?;
    let models = cf.fit(pi);
    let mut oof = ActionTable::zeros(data.len(), data.num_actions());
    for i in 0..data.len() {
        let row = oof.row_mut(i);
        models[folds.fold_of(i)].predict_into(cf.design().row(i), row);
        floor_simplex(row, p_min);
    }
    Ok((models, oof))
}

/// `min(bar_pi_theta / bar_pi0, clip)` from the fold-`j` models of lag `k`.
pub fn lag_weight(ns: &NuisanceSet, k: usize, j: usize, x_lag: &[f64], a: usize, clip: f64) -> Result<f64> {
    let l = ns.lag(k)?;
    let mut bt = l.marginal[j].predict(x_lag);
    floor_simplex(&mut bt, ns.p_min);
    let b0 = l.propensity[j].predict(x_lag);
    Ok((bt[a] / b0[a]).min(clip))
}

/// Clipped ratio of two out-of-fold tables at the logged actions.
pub fn weights_from_tables(actions: &[usize], bar_pi_theta: &ActionTable, bar_pi0: &ActionTable, clip: f64) -> Vec<f64> {
    actions
        .iter()
        .enumerate()
        .map(|(i, &a)| (bar_pi_theta.get(i, a) / bar_pi0.get(i, a)).min(clip))
        .collect()
}

/// Fits the reward model for one lag according to `cfg.reward_kind`.
pub fn fit_lag_reward(data: &LaggedDataset, lag: usize, folds: &FoldAssignment, cfg: &NuisanceConfig) -> Result<RewardModel> {
    match cfg.reward_kind {
        RewardKind::Plain => fit_reward_model_plain(data, Some(lag), folds, &cfg.reward),
        RewardKind::Mtri => {
            fit_reward_model_mtri(data, lag, folds, &cfg.reward, &cfg.critics, cfg.mtri_penalty, cfg.gram_eps)
        }
    }
}

/// Fits every lag with the given folds and target probability table.
pub fn fit_nuisances_with(
    data: &LaggedDataset,
    pi: &ActionTable,
    folds: &FoldAssignment,
    cfg: &NuisanceConfig,
) -> Result<NuisanceSet> {
    cfg.validate()?;
    if data.num_lags() == 0 {
        return Err(DolceError::InvalidInput(
            "dataset has no lag columns; lag-based estimators need at least one `lag{L}_j` block".into(),
        ));
    }
    let actions = data.actions();
    let mut lags = Vec::with_capacity(data.num_lags());
    for k in 0..data.num_lags() {
        let (propensity, bar_pi0) = fit_lag_propensity(data, k, folds, cfg.reg, cfg.p_min)?;
        let (marginal, bar_pi_theta) = fit_lag_target_marginal(data, pi, k, folds, cfg.reg, cfg.p_min)?;
        let reward = fit_lag_reward(data, k, folds, cfg)?;
        let alc = estimate_alc(data, k, folds, &reward.oof_logged(data), &cfg.alc)?;
        let weights = weights_from_tables(&actions, &bar_pi_theta, &bar_pi0, cfg.clip);
        lags.push(LagNuisance { lag: k, propensity, marginal, reward, bar_pi0, bar_pi_theta, weights, alc });
    }
    Ok(NuisanceSet { folds: folds.clone(), lags, clip: cfg.clip, p_min: cfg.p_min, pi: pi.clone() })
}

/// Splits folds from `seed` and fits every lag.
pub fn fit_nuisances(data: &LaggedDataset, policy: &Policy, cfg: &NuisanceConfig, seed: u64) -> Result<NuisanceSet> {
    cfg.validate()?;
    let folds = kfold_split(data.len(), cfg.k_cf, seed)?;
    let pi = policy_table(data, policy)?;
    fit_nuisances_with(data, &pi, &folds, cfg)
}
